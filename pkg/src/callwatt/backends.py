"""Sampling backends: trace replay and hardware readers.

Hardware backends read the kernel powercap counter files and invoke the
GPU management utility in query mode; paths and commands are
configurable through `SamplerConfig.backend_options`. The replay backend
feeds a recorded trace through the same conversion path, which makes the
whole pipeline testable without hardware.

TraceFile CSV format: header ``t_ms,channel,value``; channels `cpu_uj`
(cumulative microjoules), `ram_uj` (cumulative microjoules), `gpu_w`
(instantaneous watts), `cpu_temp_c`, `gpu_temp_c`. Rows must be sorted
by timestamp.
"""

from __future__ import annotations

import csv
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import StartupError, UnavailableChannelError
from .sampler import (
    CHANNEL_CPU_TEMP,
    CHANNEL_CPU_UJ,
    CHANNEL_GPU_TEMP,
    CHANNEL_GPU_W,
    CHANNEL_RAM_UJ,
    KNOWN_CHANNELS,
    TEMP_CHANNELS,
    SamplerConfig,
)

Reading = tuple[int, str, float]


@dataclass
class TraceFile:
    """Parsed replay trace: ordered (t_ms, channel, value) rows."""

    rows: list[Reading]
    channels: frozenset[str] = field(init=False)

    def __post_init__(self) -> None:
        last_t = None
        for t, channel, _ in self.rows:
            if channel not in KNOWN_CHANNELS:
                raise ValueError(f"unknown trace channel {channel!r}")
            if last_t is not None and t < last_t:
                raise ValueError(f"trace rows not sorted by timestamp at t={t}")
            last_t = t
        self.channels = frozenset(channel for _, channel, _ in self.rows)

    @staticmethod
    def load(path: Path | str) -> "TraceFile":
        rows: list[Reading] = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t_ms", "channel", "value"]:
                raise ValueError(f"bad trace header in {path}: {header}")
            for row in reader:
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                t_ms, channel, value = row
                rows.append((int(t_ms), channel.strip(), float(value)))
        return TraceFile(rows)

    @staticmethod
    def save(path: Path | str, rows: list[Reading]) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_ms", "channel", "value"])
            for t, channel, value in rows:
                writer.writerow([t, channel, value])


class Backend:
    """One source of raw channel readings.

    poll() returns the readings for one tick, or None once the source is
    exhausted (only replay exhausts). prime() returns readings taken
    before the first tick, used to seed counter deltas.
    """

    channels: frozenset[str] = frozenset()
    is_replay = False

    def start(self) -> None:
        pass

    def prime(self) -> list[Reading]:
        return []

    def poll(self) -> list[Reading] | None:
        raise NotImplementedError

    def stop(self) -> None:
        pass

    def read_temperature(self, channel: str) -> float:
        raise UnavailableChannelError(f"{type(self).__name__} has no {channel}")


class ReplayBackend(Backend):
    """Deterministic trace replay.

    Each poll() emits all rows of the next timestamp group; the trace's
    own timestamps flow into the log unchanged, so two runs over the
    same trace produce byte-identical logs. Temperature reads advance an
    independent cursor over the trace's temperature rows, in order.
    """

    is_replay = True

    def __init__(self, trace: TraceFile):
        self.trace = trace
        self.channels = trace.channels
        self._groups: list[list[Reading]] = []
        current: list[Reading] = []
        for row in trace.rows:
            if current and row[0] != current[-1][0]:
                self._groups.append(current)
                current = []
            current.append(row)
        if current:
            self._groups.append(current)
        self._cursor = 0
        self._temp_rows = {
            channel: [v for _, c, v in trace.rows if c == channel]
            for channel in TEMP_CHANNELS
            if channel in self.channels
        }
        self._temp_pos = {channel: 0 for channel in self._temp_rows}

    def poll(self) -> list[Reading] | None:
        if self._cursor >= len(self._groups):
            return None
        group = self._groups[self._cursor]
        self._cursor += 1
        return group

    def read_temperature(self, channel: str) -> float:
        if channel not in self._temp_rows:
            raise UnavailableChannelError(f"trace has no {channel} channel")
        rows = self._temp_rows[channel]
        return rows[min(self._temp_pos[channel], len(rows) - 1)]

    def advance_temperatures(self) -> None:
        for channel, rows in self._temp_rows.items():
            self._temp_pos[channel] = min(self._temp_pos[channel] + 1, len(rows) - 1)


class RaplBackend(Backend):
    """CPU package and DRAM cumulative energy counters via powercap.

    Maps the CPU component to the package (PKG) domain only. Domain
    directories are discovered under `base_path` by their `name` file
    (``package-*`` and ``dram``); explicit file paths in options win.
    """

    channels = frozenset({CHANNEL_CPU_UJ, CHANNEL_RAM_UJ})

    def __init__(self, options: dict | None = None):
        options = options or {}
        self._base = Path(options.get("base_path", "/sys/class/powercap/intel-rapl"))
        self._pkg_file = options.get("package_energy_file")
        self._ram_file = options.get("dram_energy_file")
        self._files: dict[str, Path] = {}

    def start(self) -> None:
        pkg, ram = self._pkg_file, self._ram_file
        if pkg is None or ram is None:
            found = self._discover()
            pkg = pkg or found.get("package")
            ram = ram or found.get("dram")
        missing = []
        if not pkg or not Path(pkg).exists():
            missing.append(CHANNEL_CPU_UJ)
        if not ram or not Path(ram).exists():
            missing.append(CHANNEL_RAM_UJ)
        if missing:
            raise StartupError(
                f"RAPL powercap counters unavailable under {self._base}: "
                + ", ".join(missing),
                missing_channels=tuple(missing),
            )
        self._files = {CHANNEL_CPU_UJ: Path(pkg), CHANNEL_RAM_UJ: Path(ram)}

    def _discover(self) -> dict[str, Path]:
        found: dict[str, Path] = {}
        if not self._base.exists():
            return found
        for domain in sorted(self._base.glob("intel-rapl:*")):
            name_file = domain / "name"
            if not name_file.exists():
                continue
            name = name_file.read_text().strip()
            if name.startswith("package") and "package" not in found:
                found["package"] = domain / "energy_uj"
            if name == "dram" and "dram" not in found:
                found["dram"] = domain / "energy_uj"
        return found

    def prime(self) -> list[Reading]:
        return self._read()

    def poll(self) -> list[Reading]:
        return self._read()

    def _read(self) -> list[Reading]:
        now = time.time_ns() // 1_000_000
        return [
            (now, channel, float(path.read_text().strip()))
            for channel, path in self._files.items()
        ]

    @staticmethod
    def read_max_range(energy_file: Path) -> int | None:
        max_file = energy_file.parent / "max_energy_range_uj"
        if max_file.exists():
            return int(max_file.read_text().strip())
        return None


class NvidiaSmiBackend(Backend):
    """GPU power draw and temperature through the management utility."""

    channels = frozenset({CHANNEL_GPU_W, CHANNEL_GPU_TEMP})

    def __init__(self, options: dict | None = None):
        options = options or {}
        self._cmd = options.get(
            "command",
            [
                "nvidia-smi",
                "--query-gpu=power.draw,temperature.gpu",
                "--format=csv,noheader,nounits",
            ],
        )

    def start(self) -> None:
        try:
            self._query()
        except (OSError, subprocess.SubprocessError, ValueError) as exc:
            raise StartupError(
                f"GPU management utility unavailable ({exc}): "
                f"{CHANNEL_GPU_W}, {CHANNEL_GPU_TEMP}",
                missing_channels=(CHANNEL_GPU_W, CHANNEL_GPU_TEMP),
            ) from exc

    def _query(self) -> tuple[float, float]:
        out = subprocess.run(
            self._cmd, capture_output=True, text=True, timeout=5, check=True
        ).stdout.strip().splitlines()[0]
        power, temp = (float(part.strip()) for part in out.split(","))
        return power, temp

    def poll(self) -> list[Reading]:
        now = time.time_ns() // 1_000_000
        power, temp = self._query()
        return [(now, CHANNEL_GPU_W, power), (now, CHANNEL_GPU_TEMP, temp)]

    def read_temperature(self, channel: str) -> float:
        if channel != CHANNEL_GPU_TEMP:
            raise UnavailableChannelError(f"nvidia-smi backend has no {channel}")
        return self._query()[1]


class CpuTempBackend(Backend):
    """CPU temperature from a sysfs thermal zone (lm-sensors equivalent)."""

    channels = frozenset({CHANNEL_CPU_TEMP})

    def __init__(self, options: dict | None = None):
        options = options or {}
        self._path = Path(
            options.get("thermal_path", "/sys/class/thermal/thermal_zone0/temp")
        )
        self._scale = float(options.get("scale", 0.001))  # millidegrees by default

    def start(self) -> None:
        if not self._path.exists():
            raise StartupError(
                f"CPU thermal sensor missing at {self._path}: {CHANNEL_CPU_TEMP}",
                missing_channels=(CHANNEL_CPU_TEMP,),
            )

    def poll(self) -> list[Reading]:
        now = time.time_ns() // 1_000_000
        return [(now, CHANNEL_CPU_TEMP, self.read_temperature(CHANNEL_CPU_TEMP))]

    def read_temperature(self, channel: str) -> float:
        if channel != CHANNEL_CPU_TEMP:
            raise UnavailableChannelError(f"thermal backend has no {channel}")
        return float(self._path.read_text().strip()) * self._scale


def build_backends(config: SamplerConfig) -> list[Backend]:
    """Instantiate the backend stack named in the config.

    Replay descriptors look like ``replay:<path>``; a replay backend is
    exclusive (it already carries every channel the trace provides).
    """
    if not config.backends:
        raise StartupError("no backends configured", missing_channels=KNOWN_CHANNELS)
    backends: list[Backend] = []
    for descriptor in config.backends:
        if descriptor.startswith("replay:"):
            trace = TraceFile.load(descriptor.split(":", 1)[1])
            backends.append(ReplayBackend(trace))
        elif descriptor == "rapl":
            backends.append(RaplBackend(config.backend_options.get("rapl")))
        elif descriptor == "nvidia-smi":
            backends.append(NvidiaSmiBackend(config.backend_options.get("nvidia-smi")))
        elif descriptor == "cpu-temp":
            backends.append(CpuTempBackend(config.backend_options.get("cpu-temp")))
        else:
            raise StartupError(f"unknown backend descriptor {descriptor!r}")
    return backends
