"""Hardware backends against fake sysfs trees and stub commands.

No real RAPL or GPU is needed: counter files live in tmp_path and the
management-utility query is any command printing 'power, temp'.
"""

from __future__ import annotations

import time

import pytest

from callwatt.backends import (
    CpuTempBackend,
    NvidiaSmiBackend,
    RaplBackend,
)
from callwatt.errors import StartupError, UnavailableChannelError
from callwatt.sampler import (
    CHANNEL_CPU_TEMP,
    CHANNEL_CPU_UJ,
    CHANNEL_GPU_TEMP,
    CHANNEL_GPU_W,
    CHANNEL_RAM_UJ,
    Component,
    SamplerConfig,
    read_log,
    start_sampling,
)


def make_powercap_tree(tmp_path, package_uj=1_000_000, dram_uj=200_000):
    base = tmp_path / "intel-rapl"
    package = base / "intel-rapl:0"
    package.mkdir(parents=True)
    (package / "name").write_text("package-0\n")
    (package / "energy_uj").write_text(f"{package_uj}\n")
    (package / "max_energy_range_uj").write_text("262143328850\n")
    dram = base / "intel-rapl:1"
    dram.mkdir()
    (dram / "name").write_text("dram\n")
    (dram / "energy_uj").write_text(f"{dram_uj}\n")
    return base


class TestRaplBackend:
    def test_discovers_package_and_dram_domains(self, tmp_path):
        base = make_powercap_tree(tmp_path)
        backend = RaplBackend({"base_path": str(base)})
        backend.start()
        readings = {channel: value for _, channel, value in backend.poll()}
        assert readings == {CHANNEL_CPU_UJ: 1_000_000.0, CHANNEL_RAM_UJ: 200_000.0}

    def test_prime_returns_initial_counters(self, tmp_path):
        base = make_powercap_tree(tmp_path)
        backend = RaplBackend({"base_path": str(base)})
        backend.start()
        assert len(backend.prime()) == 2

    def test_missing_tree_raises_startup_error(self, tmp_path):
        backend = RaplBackend({"base_path": str(tmp_path / "absent")})
        with pytest.raises(StartupError) as exc:
            backend.start()
        assert set(exc.value.missing_channels) == {CHANNEL_CPU_UJ, CHANNEL_RAM_UJ}

    def test_explicit_file_paths_win(self, tmp_path):
        pkg = tmp_path / "pkg_uj"
        ram = tmp_path / "ram_uj"
        pkg.write_text("500\n")
        ram.write_text("70\n")
        backend = RaplBackend(
            {"package_energy_file": str(pkg), "dram_energy_file": str(ram)}
        )
        backend.start()
        readings = {channel: value for _, channel, value in backend.poll()}
        assert readings[CHANNEL_CPU_UJ] == 500.0
        assert readings[CHANNEL_RAM_UJ] == 70.0

    def test_max_range_read_from_sibling_file(self, tmp_path):
        base = make_powercap_tree(tmp_path)
        energy = base / "intel-rapl:0" / "energy_uj"
        assert RaplBackend.read_max_range(energy) == 262143328850


class TestCpuTempBackend:
    def test_millidegree_scaling(self, tmp_path):
        thermal = tmp_path / "temp"
        thermal.write_text("47500\n")
        backend = CpuTempBackend({"thermal_path": str(thermal)})
        backend.start()
        assert backend.read_temperature(CHANNEL_CPU_TEMP) == 47.5

    def test_missing_sensor_is_startup_error(self, tmp_path):
        backend = CpuTempBackend({"thermal_path": str(tmp_path / "none")})
        with pytest.raises(StartupError):
            backend.start()

    def test_wrong_channel_rejected(self, tmp_path):
        thermal = tmp_path / "temp"
        thermal.write_text("40000\n")
        backend = CpuTempBackend({"thermal_path": str(thermal)})
        with pytest.raises(UnavailableChannelError):
            backend.read_temperature(CHANNEL_GPU_TEMP)


class TestNvidiaSmiBackend:
    def test_stub_command_parsed(self):
        backend = NvidiaSmiBackend({"command": ["echo", "42.5, 36"]})
        backend.start()
        readings = {channel: value for _, channel, value in backend.poll()}
        assert readings == {CHANNEL_GPU_W: 42.5, CHANNEL_GPU_TEMP: 36.0}

    def test_temperature_channel(self):
        backend = NvidiaSmiBackend({"command": ["echo", "30.0, 33"]})
        assert backend.read_temperature(CHANNEL_GPU_TEMP) == 33.0

    def test_missing_utility_names_gpu_channels(self):
        backend = NvidiaSmiBackend({"command": ["/nonexistent/nvidia-smi"]})
        with pytest.raises(StartupError) as exc:
            backend.start()
        assert set(exc.value.missing_channels) == {CHANNEL_GPU_W, CHANNEL_GPU_TEMP}


class TestRealtimeLoop:
    """The wall-clock sampling loop, driven by the fake hardware stack."""

    def build_config(self, tmp_path, interval_ms=50):
        base = make_powercap_tree(tmp_path)
        thermal = tmp_path / "thermal"
        thermal.write_text("45000\n")
        return SamplerConfig(
            interval_ms=interval_ms,
            backends=("rapl", "nvidia-smi", "cpu-temp"),
            log_path=tmp_path / "log.jsonl",
            backend_options={
                "rapl": {"base_path": str(base)},
                "nvidia-smi": {"command": ["echo", "21.0, 31"]},
                "cpu-temp": {"thermal_path": str(thermal)},
            },
        )

    def test_ticks_produce_all_components(self, tmp_path):
        config = self.build_config(tmp_path)
        handle = start_sampling(config)
        time.sleep(0.35)
        handle.stop()
        assert handle.status == "stopped"
        samples = read_log(config.log_path)
        by_component = {c: [s for s in samples if s.component is c] for c in Component}
        # static counters: zero average power, still one sample per tick
        assert len(by_component[Component.CPU]) >= 3
        assert all(s.power_w == 0.0 for s in by_component[Component.CPU])
        assert all(s.temp_c == 45.0 for s in by_component[Component.CPU])
        assert all(s.power_w == 21.0 for s in by_component[Component.GPU])
        assert all(s.temp_c == 31.0 for s in by_component[Component.GPU])
        assert all(s.temp_c is None for s in by_component[Component.RAM])

    def test_counter_delta_feeds_average_power(self, tmp_path):
        config = self.build_config(tmp_path, interval_ms=100)
        energy_file = tmp_path / "intel-rapl" / "intel-rapl:0" / "energy_uj"
        handle = start_sampling(config)
        # bump the package counter by 1 J while the loop runs
        for bump in range(1, 4):
            time.sleep(0.1)
            energy_file.write_text(f"{1_000_000 + bump * 1_000_000}\n")
        time.sleep(0.15)
        handle.stop()
        cpu = [s for s in read_log(config.log_path) if s.component is Component.CPU]
        # 1 J per 100 ms tick converts to 10 W average power
        assert any(abs(s.power_w - 10.0) < 1e-9 for s in cpu)

    def test_timestamps_strictly_increase_per_component(self, tmp_path):
        config = self.build_config(tmp_path)
        handle = start_sampling(config)
        time.sleep(0.3)
        handle.stop()
        streams = {}
        for sample in read_log(config.log_path):
            streams.setdefault(sample.component, []).append(sample.t)
        for times in streams.values():
            assert times == sorted(times)
            assert len(set(times)) == len(times)

    def test_stop_honored_within_one_interval(self, tmp_path):
        config = self.build_config(tmp_path, interval_ms=200)
        handle = start_sampling(config)
        started = time.monotonic()
        handle.stop()
        assert time.monotonic() - started < 0.5
