"""Synthetic-workload harness over the replay pipeline.

Builds traces from per-tick power series (constant no-load baseline
plus non-negative bursts inside method windows), replays them through
the real sampler, calibrates on the idle prefix, and computes net
energies with the production analysis path. Because every step is
derived from the trace and the configuration, simulated runs are fully
deterministic, which is what makes replay-mode experiments repeatable
byte for byte.

Tick k (k >= 1) produces the sample at k * interval_ms; window bounds
are expressed in ticks and map to half-open [a*interval, b*interval)
millisecond windows.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis
from .backends import (
    TraceFile,
)
from .records import ComponentEnergy, MeasurementRecord, RecordSettings
from .sampler import (
    CHANNEL_CPU_TEMP,
    CHANNEL_CPU_UJ,
    CHANNEL_GPU_TEMP,
    CHANNEL_GPU_W,
    CHANNEL_RAM_UJ,
    Component,
    PowerSample,
    SamplerConfig,
    read_log,
    start_sampling,
)
from .stability import StabilityConfig, StableState, calibrate

Reading = tuple[int, str, float]


@dataclass
class MethodSpec:
    function_to_run: str
    t0_tick: int
    t1_tick: int
    extra_w: dict[Component, float] = field(default_factory=dict)
    args_total_bytes: int = 0

    def window_ms(self, interval_ms: int) -> tuple[int, int]:
        return self.t0_tick * interval_ms, self.t1_tick * interval_ms


@dataclass
class Workload:
    """One synthetic experiment: idle prefix, project window, methods."""

    name: str
    interval_ms: int
    baseline_w: dict[Component, float]
    calibration_ticks: int
    total_ticks: int
    project_t0_tick: int
    project_t1_tick: int
    methods: list[MethodSpec]
    idle_bumps: list[tuple[int, Component, float]] = field(default_factory=list)
    temps: tuple[float, float] = (35.0, 30.0)  # below the default thresholds

    def project_window_ms(self) -> tuple[int, int]:
        return (
            self.project_t0_tick * self.interval_ms,
            self.project_t1_tick * self.interval_ms,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "interval_ms": self.interval_ms,
            "baseline_w": {c.value: w for c, w in self.baseline_w.items()},
            "calibration_ticks": self.calibration_ticks,
            "total_ticks": self.total_ticks,
            "project_t0_tick": self.project_t0_tick,
            "project_t1_tick": self.project_t1_tick,
            "methods": [
                {
                    "function_to_run": m.function_to_run,
                    "t0_tick": m.t0_tick,
                    "t1_tick": m.t1_tick,
                    "extra_w": {c.value: w for c, w in m.extra_w.items()},
                    "args_total_bytes": m.args_total_bytes,
                }
                for m in self.methods
            ],
            "idle_bumps": [
                [tick, component.value, watts]
                for tick, component, watts in self.idle_bumps
            ],
            "temps": list(self.temps),
        }

    @staticmethod
    def from_dict(obj: dict) -> "Workload":
        return Workload(
            name=obj["name"],
            interval_ms=int(obj["interval_ms"]),
            baseline_w={Component(c): float(w) for c, w in obj["baseline_w"].items()},
            calibration_ticks=int(obj["calibration_ticks"]),
            total_ticks=int(obj["total_ticks"]),
            project_t0_tick=int(obj["project_t0_tick"]),
            project_t1_tick=int(obj["project_t1_tick"]),
            methods=[
                MethodSpec(
                    function_to_run=m["function_to_run"],
                    t0_tick=int(m["t0_tick"]),
                    t1_tick=int(m["t1_tick"]),
                    extra_w={
                        Component(c): float(w) for c, w in m.get("extra_w", {}).items()
                    },
                    args_total_bytes=int(m.get("args_total_bytes", 0)),
                )
                for m in obj["methods"]
            ],
            idle_bumps=[
                (int(tick), Component(component), float(watts))
                for tick, component, watts in obj.get("idle_bumps", [])
            ],
            temps=tuple(obj.get("temps", (35.0, 30.0))),
        )

    @staticmethod
    def load(path: Path | str) -> "Workload":
        return Workload.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def tick_powers(workload: Workload) -> list[dict[Component, float]]:
    """Intended power at each tick 1..total_ticks, per component."""
    powers = [dict(workload.baseline_w) for _ in range(workload.total_ticks)]
    for method in workload.methods:
        for tick in range(method.t0_tick, method.t1_tick):
            for component, extra in method.extra_w.items():
                powers[tick - 1][component] += extra
    for tick, component, extra in workload.idle_bumps:
        powers[tick - 1][component] += extra
    return powers


def build_trace_rows(workload: Workload) -> list[Reading]:
    """Encode tick powers as a replay trace.

    Counter channels get a seed row at t=0 and cumulative values such
    that the sampler's delta conversion reproduces the intended power
    exactly; the GPU channel is written as instantaneous watts.
    """
    interval = workload.interval_ms
    cpu_temp, gpu_temp = workload.temps
    rows: list[Reading] = [
        (0, CHANNEL_CPU_UJ, 0.0),
        (0, CHANNEL_RAM_UJ, 0.0),
        (0, CHANNEL_CPU_TEMP, cpu_temp),
        (0, CHANNEL_GPU_TEMP, gpu_temp),
    ]
    cpu_uj = 0.0
    ram_uj = 0.0
    for index, tick in enumerate(tick_powers(workload), start=1):
        t = index * interval
        cpu_uj += tick.get(Component.CPU, 0.0) * interval * 1000.0
        ram_uj += tick.get(Component.RAM, 0.0) * interval * 1000.0
        rows.append((t, CHANNEL_CPU_UJ, cpu_uj))
        rows.append((t, CHANNEL_RAM_UJ, ram_uj))
        rows.append((t, CHANNEL_GPU_W, tick.get(Component.GPU, 0.0)))
        rows.append((t, CHANNEL_CPU_TEMP, cpu_temp))
        rows.append((t, CHANNEL_GPU_TEMP, gpu_temp))
    return rows


def write_trace(path: Path | str, workload: Workload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    TraceFile.save(path, build_trace_rows(workload))
    return path


@dataclass
class SimulationResult:
    workload: Workload
    stable_state: StableState
    project: analysis.NetEnergyResult
    methods: list[analysis.NetEnergyResult]
    log_path: Path


def replay_log(trace_path: Path | str, log_path: Path | str, interval_ms: int) -> None:
    """Drain a trace through the real sampling loop into a log file."""
    config = SamplerConfig(
        interval_ms=interval_ms,
        backends=(f"replay:{trace_path}",),
        log_path=Path(log_path),
    )
    handle = start_sampling(config)
    handle.join(timeout=120)
    if handle.error is not None:
        raise handle.error


def simulate_workload(
    workload: Workload,
    work_dir: Path | str,
    *,
    stability: StabilityConfig | None = None,
) -> SimulationResult:
    """Full replay pipeline: trace, log, calibration, net energies."""
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    trace_path = write_trace(work_dir / f"{workload.name}.trace.csv", workload)
    log_path = work_dir / f"{workload.name}.energy.jsonl"
    if log_path.exists():
        log_path.unlink()
    replay_log(trace_path, log_path, workload.interval_ms)

    samples = read_log(log_path)
    interval = workload.interval_ms
    calibration_duration_s = workload.calibration_ticks * interval / 1000.0
    stable_state = calibrate(
        samples,
        calibration_duration_s,
        config=stability or StabilityConfig(),
        interval_ms=interval,
        calibrated_at=0.0,
    )

    p0, p1 = workload.project_window_ms()
    project = analysis.net_energy(
        samples, stable_state, p0, p1, interval, function_to_run=workload.name
    )
    methods = []
    for method in workload.methods:
        m0, m1 = method.window_ms(interval)
        methods.append(
            analysis.net_energy(
                samples, stable_state, m0, m1, interval,
                function_to_run=method.function_to_run,
            )
        )
    return SimulationResult(
        workload=workload,
        stable_state=stable_state,
        project=project,
        methods=methods,
        log_path=log_path,
    )


def result_to_record(
    result: analysis.NetEnergyResult,
    samples_by_component: dict[Component, list[PowerSample]],
    settings: RecordSettings,
    t0: int,
    t1: int,
    *,
    args_total_bytes: int = 0,
) -> MeasurementRecord:
    """Materialize a simulated window as a stored measurement record."""
    components = {
        component: ComponentEnergy(
            gross_j=result.gross_j[component],
            net_j=result.net_j[component],
            samples=[
                s for s in samples_by_component.get(component, []) if t0 <= s.t < t1
            ],
        )
        for component in result.net_j
    }
    per_arg = [args_total_bytes] if args_total_bytes else []
    return MeasurementRecord(
        function_to_run=result.function_to_run or "unknown",
        start_ms=t0,
        end_ms=t1,
        execution_time_s=(t1 - t0) / 1000.0,
        components=components,
        settings=settings,
        args_sizes={"per_arg": per_arg, "total_bytes": args_total_bytes},
        flags=[],
    )


def scaled_workload(workload: Workload, fraction: float) -> Workload:
    """Input-size sweep variant: method durations and argument bytes
    scale with the data fraction, mimicking a workload whose cost is
    linear in its input."""
    scaled_methods = []
    for method in workload.methods:
        full_ticks = method.t1_tick - method.t0_tick
        ticks = max(1, round(full_ticks * fraction))
        scaled_methods.append(
            MethodSpec(
                function_to_run=method.function_to_run,
                t0_tick=method.t0_tick,
                t1_tick=method.t0_tick + ticks,
                extra_w=dict(method.extra_w),
                args_total_bytes=round(method.args_total_bytes * fraction),
            )
        )
    return Workload(
        name=f"{workload.name}_f{round(fraction * 10):02d}",
        interval_ms=workload.interval_ms,
        baseline_w=dict(workload.baseline_w),
        calibration_ticks=workload.calibration_ticks,
        total_ticks=workload.total_ticks,
        project_t0_tick=workload.project_t0_tick,
        project_t1_tick=workload.project_t1_tick,
        methods=scaled_methods,
        idle_bumps=list(workload.idle_bumps),
        temps=workload.temps,
    )


def record_settings(config, stable_state: StableState) -> RecordSettings:
    """Record settings block shared by every simulated record."""
    stability = config.stability
    return RecordSettings(
        interval_ms=config.interval_ms,
        wait_unstable_s=0.0,
        settle_s=stability.settle_after_execution_s,
        cpu_max_temp=stability.cpu_max_temp_c,
        gpu_max_temp=stability.gpu_max_temp_c,
        stable_state=stable_state.to_dict(),
    )


def random_workload(
    rng: random.Random,
    *,
    name: str = "synthetic",
    interval_ms: int = 500,
) -> Workload:
    """Randomized well-formed workload for property runs.

    The idle prefix is exactly the baseline, method windows are
    disjoint tick ranges inside the project window, bursts and idle
    bumps are non-negative, so summed in-scope method energy can never
    exceed project energy.
    """
    baseline = {
        Component.CPU: rng.uniform(5.0, 40.0),
        Component.RAM: rng.uniform(2.0, 10.0),
        Component.GPU: rng.uniform(10.0, 50.0),
    }
    calibration_ticks = rng.randint(22, 30)
    project_len = rng.randint(30, 90)
    project_t0 = calibration_ticks + 1 + rng.randint(0, 4)
    project_t1 = project_t0 + project_len
    total_ticks = project_t1 + rng.randint(0, 5)

    methods: list[MethodSpec] = []
    cursor = project_t0
    for index in range(rng.randint(1, 5)):
        gap = rng.randint(0, 4)
        length = rng.randint(2, 8)
        if cursor + gap + length > project_t1:
            break
        t0 = cursor + gap
        t1 = t0 + length
        cursor = t1
        methods.append(
            MethodSpec(
                function_to_run=f"{name}.method_{index}()",
                t0_tick=t0,
                t1_tick=t1,
                extra_w={
                    Component.CPU: rng.uniform(0.0, 40.0),
                    Component.RAM: rng.uniform(0.0, 8.0),
                    Component.GPU: rng.uniform(0.0, 60.0),
                },
            )
        )
    if not methods:
        methods.append(
            MethodSpec(
                function_to_run=f"{name}.method_0()",
                t0_tick=project_t0,
                t1_tick=project_t0 + 2,
                extra_w={Component.GPU: rng.uniform(1.0, 30.0)},
            )
        )

    method_ticks = {
        tick for m in methods for tick in range(m.t0_tick, m.t1_tick)
    }
    idle_ticks = [
        tick for tick in range(project_t0, project_t1) if tick not in method_ticks
    ]
    if not idle_ticks:
        # keep a strictly positive out-of-scope margin: free the last tick
        methods[-1].t1_tick -= 1
        idle_ticks = [methods[-1].t1_tick]
        method_ticks.discard(idle_ticks[0])
    # every component gets strictly positive out-of-scope energy so the
    # project-vs-methods inequality is strict, not decided by rounding
    idle_bumps = [
        (idle_ticks[0], component, 1.0 + rng.uniform(0.0, 2.0))
        for component in Component
    ]
    for tick in idle_ticks[1:]:
        if rng.random() < 0.3:
            idle_bumps.append(
                (tick, rng.choice(list(Component)), rng.uniform(0.0, 5.0))
            )
    return Workload(
        name=name,
        interval_ms=interval_ms,
        baseline_w=baseline,
        calibration_ticks=calibration_ticks,
        total_ticks=total_ticks,
        project_t0_tick=project_t0,
        project_t1_tick=project_t1,
        methods=methods,
        idle_bumps=idle_bumps,
    )
