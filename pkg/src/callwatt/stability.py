"""No-load baseline calibration and machine stability gating.

A measurement may only start when the machine is stable: per-component
energy variation (coefficient of variation over a sliding window) must
not exceed the no-load baseline's, and CPU/GPU temperatures must be
below their thresholds.

The coefficient of variation is population standard deviation divided
by the mean (sigma/mu). Temperature thresholds are strict upper bounds.
Temperature readings are taken from the sampler log itself rather than
separate sensor processes, so no extra load runs while the energy
window is being evaluated; the stability poll stops once measurement
begins.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import (
    CalibrationTooShortError,
    InsufficientDataError,
    UndefinedCVError,
)
from .sampler import (
    DEFAULT_INTERVAL_MS,
    Component,
    PowerSample,
    last_window_by_component,
    latest_temperatures,
    split_by_component,
)

DEFAULT_WINDOW = 20
DEFAULT_CPU_MAX_TEMP_C = 55.0
DEFAULT_GPU_MAX_TEMP_C = 40.0
DEFAULT_CALIBRATION_S = 600.0
DEFAULT_SETTLE_S = 10.0

ALL_COMPONENTS = (Component.CPU, Component.RAM, Component.GPU)


@dataclass(frozen=True)
class ComponentBaseline:
    mean_power_w: float
    cv: float


@dataclass
class StableState:
    """No-load mean power and coefficient of variation per component."""

    baselines: dict[Component, ComponentBaseline]
    calibration_s: float
    calibrated_at: float

    def __post_init__(self) -> None:
        for component, baseline in self.baselines.items():
            if baseline.mean_power_w <= 0:
                raise ValueError(
                    f"{component.value} baseline mean power must be positive"
                )
            if baseline.cv < 0:
                raise ValueError(f"{component.value} baseline cv must be >= 0")

    def mean_power(self, component: Component) -> float:
        return self.baselines[component].mean_power_w

    def cv(self, component: Component) -> float:
        return self.baselines[component].cv

    def mean_power_map(self) -> dict[Component, float]:
        return {c: b.mean_power_w for c, b in self.baselines.items()}

    def to_dict(self) -> dict:
        out: dict = {
            c.value: {"mean_power_w": b.mean_power_w, "cv": b.cv}
            for c, b in self.baselines.items()
        }
        out["calibration_s"] = self.calibration_s
        out["calibrated_at"] = self.calibrated_at
        return out

    @staticmethod
    def from_dict(obj: Mapping) -> "StableState":
        baselines = {
            component: ComponentBaseline(
                mean_power_w=float(obj[component.value]["mean_power_w"]),
                cv=float(obj[component.value]["cv"]),
            )
            for component in ALL_COMPONENTS
            if component.value in obj
        }
        return StableState(
            baselines=baselines,
            calibration_s=float(obj["calibration_s"]),
            calibrated_at=float(obj["calibrated_at"]),
        )

    def save(self, path: Path | str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def load(path: Path | str) -> "StableState":
        return StableState.from_dict(json.loads(Path(path).read_text()))


@dataclass
class StabilityConfig:
    """Stability gate parameters.

    `check_interval_ms` is the poll cadence of wait_for_stable; there is
    no protocol-mandated value for it. `settle_after_execution_s` is the
    idle period after each measured execution that lets tail power
    states decay.
    """

    window: int = DEFAULT_WINDOW
    cpu_max_temp_c: float = DEFAULT_CPU_MAX_TEMP_C
    gpu_max_temp_c: float = DEFAULT_GPU_MAX_TEMP_C
    check_interval_ms: int = 1000
    wait_timeout_s: float = 300.0
    settle_after_execution_s: float = DEFAULT_SETTLE_S

    def __post_init__(self) -> None:
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if self.cpu_max_temp_c <= 0 or self.gpu_max_temp_c <= 0:
            raise ValueError("temperature thresholds must be positive")
        if self.wait_timeout_s <= 0:
            raise ValueError("wait timeout must be positive")


@dataclass(frozen=True)
class WaitReport:
    waited_s: float
    outcome: str  # "stable" | "timeout"


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Population standard deviation divided by the mean."""
    if len(values) == 0:
        raise UndefinedCVError("cv of an empty series is undefined")
    mean = math.fsum(values) / len(values)
    if mean == 0:
        raise UndefinedCVError("cv is undefined for zero-mean series")
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return math.sqrt(variance) / mean


def calibrate(
    sample_source: Path | str | Iterable[PowerSample],
    duration_s: float = DEFAULT_CALIBRATION_S,
    *,
    config: StabilityConfig | None = None,
    interval_ms: int = DEFAULT_INTERVAL_MS,
    persist_path: Path | str | None = None,
    calibrated_at: float | None = None,
) -> StableState:
    """Compute the no-load StableState from samples gathered under idle.

    `sample_source` is an energy-log path or an iterable of samples; the
    calibration covers the samples within `duration_s` of the first one.
    Requires at least `window` samples per component present.
    """
    config = config or StabilityConfig()
    if duration_s * 1000 < config.window * interval_ms:
        raise CalibrationTooShortError(
            f"duration {duration_s}s shorter than window "
            f"({config.window} x {interval_ms}ms)"
        )
    if isinstance(sample_source, (str, Path)):
        from .sampler import read_log

        samples = read_log(sample_source)
    else:
        samples = list(sample_source)
    if not samples:
        raise CalibrationTooShortError("no samples gathered during calibration")
    t0 = samples[0].t
    cutoff = t0 + int(duration_s * 1000)
    streams = split_by_component(s for s in samples if s.t < cutoff)

    baselines = {}
    for component, stream in streams.items():
        if len(stream) < config.window:
            raise CalibrationTooShortError(
                f"{component.value}: {len(stream)} samples < window {config.window}"
            )
        powers = [s.power_w for s in stream]
        mean = math.fsum(powers) / len(powers)
        baselines[component] = ComponentBaseline(
            mean_power_w=mean, cv=coefficient_of_variation(powers)
        )

    state = StableState(
        baselines=baselines,
        calibration_s=duration_s,
        calibrated_at=time.time() if calibrated_at is None else calibrated_at,
    )
    if persist_path is not None:
        state.save(persist_path)
    return state


def is_energy_stable(
    recent: Mapping[Component, Sequence[PowerSample]] | Sequence[PowerSample],
    baseline: StableState,
    *,
    window: int = DEFAULT_WINDOW,
    components: Sequence[Component] = ALL_COMPONENTS,
) -> bool:
    """True iff every component's recent CV is at or below its baseline CV.

    Exactly `window` samples per component are evaluated (the most
    recent ones); fewer raises InsufficientDataError, which callers
    treat as unstable.
    """
    if not isinstance(recent, Mapping):
        recent = last_window_by_component(recent, window)
    for component in components:
        stream = recent.get(component, [])
        if len(stream) < window:
            raise InsufficientDataError(
                f"{component.value}: {len(stream)} samples < window {window}"
            )
        values = [s.power_w for s in stream[-window:]]
        if coefficient_of_variation(values) > baseline.cv(component):
            return False
    return True


def is_temperature_ok(
    cpu_temp_c: float, gpu_temp_c: float, config: StabilityConfig
) -> bool:
    """Strictly below both thresholds (they are safety ceilings)."""
    return cpu_temp_c < config.cpu_max_temp_c and gpu_temp_c < config.gpu_max_temp_c


class Clock:
    """Wall clock; swap out for a virtual clock in tests."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


def wait_for_stable(
    config: StabilityConfig,
    baseline: StableState,
    sample_reader: Callable[[], Sequence[PowerSample]],
    *,
    components: Sequence[Component] = ALL_COMPONENTS,
    clock: Clock | None = None,
) -> WaitReport:
    """Block until temperature and energy stability both pass, or time out.

    Polls `sample_reader` every `check_interval_ms`. Temperatures come
    from the sampled stream itself; when the stream carries none, the
    temperature gate passes (no sensor channel was configured). The
    reported wait time is stored in measurement records as the
    wait-if-unstable setting.
    """
    clock = clock or Clock()
    started = clock.now()
    while True:
        samples = sample_reader()
        cpu_temp, gpu_temp = latest_temperatures(samples)
        temps_ok = True
        if cpu_temp is not None or gpu_temp is not None:
            temps_ok = is_temperature_ok(
                cpu_temp if cpu_temp is not None else 0.0,
                gpu_temp if gpu_temp is not None else 0.0,
                config,
            )
        if temps_ok:
            try:
                if is_energy_stable(
                    samples, baseline, window=config.window, components=components
                ):
                    return WaitReport(waited_s=clock.now() - started, outcome="stable")
            except InsufficientDataError:
                pass  # not enough samples yet: unstable
        if clock.now() - started >= config.wait_timeout_s:
            return WaitReport(waited_s=clock.now() - started, outcome="timeout")
        clock.sleep(config.check_interval_ms / 1000.0)
