from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from callwatt.errors import (
    CalibrationTooShortError,
    InsufficientDataError,
    UndefinedCVError,
)
from callwatt.sampler import Component, PowerSample
from callwatt.stability import (
    ComponentBaseline,
    StabilityConfig,
    StableState,
    calibrate,
    coefficient_of_variation,
    is_energy_stable,
    is_temperature_ok,
    wait_for_stable,
)


def watts(component, powers, start=0, interval=500):
    return [
        PowerSample(t=start + i * interval, component=component, power_w=p)
        for i, p in enumerate(powers)
    ]


def make_state(cv=0.05, mean=10.0):
    return StableState(
        baselines={c: ComponentBaseline(mean_power_w=mean, cv=cv) for c in Component},
        calibration_s=600.0,
        calibrated_at=0.0,
    )


class TestCoefficientOfVariation:
    def test_constant_series(self):
        assert coefficient_of_variation([5, 5, 5]) == 0.0

    def test_direct_formula(self):
        # mu = 2.5, population sigma = sqrt(1.25)
        expected = math.sqrt(1.25) / 2.5
        assert expected == pytest.approx(0.44721, abs=1e-5)
        assert coefficient_of_variation([1, 2, 3, 4]) == pytest.approx(expected)

    def test_scale_invariance(self):
        x = [1, 2, 3, 4]
        assert coefficient_of_variation([2 * v for v in x]) == pytest.approx(
            coefficient_of_variation(x)
        )

    def test_empty_series(self):
        with pytest.raises(UndefinedCVError):
            coefficient_of_variation([])

    def test_zero_mean(self):
        with pytest.raises(UndefinedCVError):
            coefficient_of_variation([-1.0, 1.0])

    @given(
        values=st.lists(st.floats(0.1, 1000), min_size=2, max_size=30),
        scale=st.floats(0.01, 100),
    )
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance_property(self, values, scale):
        base = coefficient_of_variation(values)
        scaled = coefficient_of_variation([scale * v for v in values])
        assert scaled == pytest.approx(base, rel=1e-6, abs=1e-9)


class TestCalibrate:
    def test_default_duration_is_ten_minutes(self):
        import inspect

        signature = inspect.signature(calibrate)
        assert signature.parameters["duration_s"].default == 600.0

    def test_constant_gpu_trace(self):
        samples = watts(Component.GPU, [18.0] * 25)
        state = calibrate(samples, 12.5, interval_ms=500, calibrated_at=0.0)
        assert state.baselines[Component.GPU].mean_power_w == 18.0
        assert state.baselines[Component.GPU].cv == 0.0

    def test_too_short_trace(self):
        samples = watts(Component.GPU, [18.0] * 10)
        with pytest.raises(CalibrationTooShortError):
            calibrate(samples, 600.0, interval_ms=500)

    def test_duration_below_window_rejected(self):
        with pytest.raises(CalibrationTooShortError):
            calibrate([], 5.0, interval_ms=500)  # 5 s < 20 x 500 ms

    def test_persist_round_trip(self, tmp_path):
        samples = watts(Component.GPU, [18.0] * 25) + watts(
            Component.CPU, [10.0] * 25
        ) + watts(Component.RAM, [2.0] * 25)
        path = tmp_path / "stable.json"
        state = calibrate(
            samples, 12.5, interval_ms=500, persist_path=path, calibrated_at=1.0
        )
        loaded = StableState.load(path)
        assert loaded.baselines == state.baselines
        assert loaded.calibration_s == 12.5

    def test_stable_state_file_schema(self, tmp_path):
        samples = (
            watts(Component.GPU, [18.0] * 25)
            + watts(Component.CPU, [10.0] * 25)
            + watts(Component.RAM, [2.0] * 25)
        )
        path = tmp_path / "stable.json"
        calibrate(samples, 12.5, interval_ms=500, persist_path=path, calibrated_at=2.0)
        import json

        obj = json.loads(path.read_text())
        assert set(obj) == {"cpu", "ram", "gpu", "calibration_s", "calibrated_at"}
        assert set(obj["gpu"]) == {"mean_power_w", "cv"}


class TestIsEnergyStable:
    def test_constant_window_stable(self):
        recent = {c: watts(c, [10.0] * 20) for c in Component}
        assert is_energy_stable(recent, make_state(cv=0.05)) is True

    def test_one_noisy_component_fails(self):
        # window [10]*19 + [14]: mu = 10.2, sigma = sqrt(mean((x-mu)^2))
        noisy = [10.0] * 19 + [14.0]
        mean = sum(noisy) / 20
        sigma = math.sqrt(sum((v - mean) ** 2 for v in noisy) / 20)
        assert sigma / mean > 0.05  # direct-formula oracle
        recent = {c: watts(c, [10.0] * 20) for c in Component}
        recent[Component.RAM] = watts(Component.RAM, noisy)
        assert is_energy_stable(recent, make_state(cv=0.05)) is False

    def test_nineteen_samples_insufficient(self):
        recent = {c: watts(c, [10.0] * 20) for c in Component}
        recent[Component.GPU] = watts(Component.GPU, [10.0] * 19)
        with pytest.raises(InsufficientDataError):
            is_energy_stable(recent, make_state())

    def test_boundary_equal_cv_is_stable(self):
        values = [1.0, 2.0, 3.0, 4.0] * 5
        cv = coefficient_of_variation(values)
        recent = {c: watts(c, values) for c in Component}
        assert is_energy_stable(recent, make_state(cv=cv)) is True

    @given(scale=st.floats(0.01, 50))
    @settings(max_examples=40, deadline=None)
    def test_scale_invariance_of_verdict(self, scale):
        values = [10.0, 10.5, 9.5, 10.2, 9.8] * 4
        recent = {c: watts(c, values) for c in Component}
        scaled = {c: watts(c, [scale * v for v in values]) for c in Component}
        baseline = make_state(cv=coefficient_of_variation(values) * 1.01)
        assert is_energy_stable(recent, baseline) == is_energy_stable(scaled, baseline)

    def test_calibration_slice_of_constant_trace_is_stable(self):
        values = [18.0] * 40
        state = calibrate(
            watts(Component.GPU, values)
            + watts(Component.CPU, values)
            + watts(Component.RAM, values),
            20.0,
            interval_ms=500,
            calibrated_at=0.0,
        )
        window = {c: watts(c, values[5:25]) for c in Component}
        assert is_energy_stable(window, state) is True


class TestIsTemperatureOk:
    def test_below_thresholds(self):
        assert is_temperature_ok(54.9, 39.9, StabilityConfig()) is True

    def test_cpu_at_threshold_fails(self):
        assert is_temperature_ok(55.0, 30.0, StabilityConfig()) is False

    def test_gpu_at_threshold_fails(self):
        assert is_temperature_ok(40.0, 40.0, StabilityConfig()) is False

    def test_raising_threshold_is_monotone(self):
        config = StabilityConfig()
        loose = StabilityConfig(cpu_max_temp_c=90.0, gpu_max_temp_c=80.0)
        for cpu, gpu in [(10, 10), (54.9, 39.9), (55, 40), (80, 70)]:
            if is_temperature_ok(cpu, gpu, config):
                assert is_temperature_ok(cpu, gpu, loose)


class _VirtualClock:
    def __init__(self):
        self.t = 0.0
        self.sleeps = 0

    def now(self):
        return self.t

    def sleep(self, seconds):
        self.t += seconds
        self.sleeps += 1


class TestWaitForStable:
    def _reader(self, samples_by_time, clock):
        """Samples visible at the virtual time, mirroring a growing log."""

        def read():
            now_ms = clock.t * 1000
            return [s for s in samples_by_time if s.t <= now_ms]

        return read

    def test_already_stable(self):
        clock = _VirtualClock()
        samples = [s for c in Component for s in watts(c, [10.0] * 20)]
        config = StabilityConfig(check_interval_ms=100, wait_timeout_s=5)
        report = wait_for_stable(
            config, make_state(cv=0.01), lambda: samples, clock=clock
        )
        assert report.outcome == "stable"
        assert report.waited_s == 0.0

    def test_spike_then_constant_waits_out_the_spike(self):
        # 3 s noisy spike at the head; the 20-sample window must slide
        # fully past it before the CV drops back to the baseline's
        interval = 100
        spike = [50.0, 9.0, 55.0, 12.0, 48.0, 11.0] * 5
        calm = [10.0] * 100
        samples = []
        for component in Component:
            samples.extend(watts(component, spike + calm, interval=interval))
        clock = _VirtualClock()
        config = StabilityConfig(check_interval_ms=100, wait_timeout_s=60)
        report = wait_for_stable(
            config,
            make_state(cv=0.0001),
            self._reader(samples, clock),
            clock=clock,
        )
        assert report.outcome == "stable"
        assert report.waited_s >= 3.0

    def test_permanently_noisy_times_out(self):
        clock = _VirtualClock()
        noisy = [10.0, 60.0] * 30
        samples = [s for c in Component for s in watts(c, noisy, interval=100)]
        config = StabilityConfig(check_interval_ms=200, wait_timeout_s=3)
        report = wait_for_stable(
            config, make_state(cv=0.001), lambda: samples, clock=clock
        )
        assert report.outcome == "timeout"
        assert report.waited_s >= 3.0

    def test_never_stable_while_temperature_fails(self):
        clock = _VirtualClock()
        samples = []
        for component in Component:
            temp = 95.0 if component is Component.CPU else None
            samples.extend(
                PowerSample(t=i * 100, component=component, power_w=10.0, temp_c=temp)
                for i in range(30)
            )
        config = StabilityConfig(check_interval_ms=200, wait_timeout_s=2)
        report = wait_for_stable(
            config, make_state(cv=0.01), lambda: samples, clock=clock
        )
        assert report.outcome == "timeout"


class TestConfigValidation:
    def test_window_floor(self):
        with pytest.raises(ValueError):
            StabilityConfig(window=1)

    def test_positive_timeout(self):
        with pytest.raises(ValueError):
            StabilityConfig(wait_timeout_s=0)

    def test_mean_power_must_be_positive(self):
        with pytest.raises(ValueError):
            StableState(
                baselines={Component.CPU: ComponentBaseline(0.0, 0.1)},
                calibration_s=600,
                calibrated_at=0,
            )
