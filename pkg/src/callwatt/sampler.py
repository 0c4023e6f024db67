"""Per-component power sampling.

Acquires power and temperature readings from hardware backends (RAPL
powercap counters, the NVIDIA management utility) or from a deterministic
trace-replay backend, converts them to a uniform per-component power
schema, and appends them to a JSON-lines log.

Log schema, one object per line, flushed per tick::

    {"t": <int ms>, "component": "cpu"|"ram"|"gpu", "power_w": <float>, "temp_c": <float|null>}

Cumulative microjoule counters (CPU package, RAM) are normalized to
average power over the preceding interval at ingest, so the log is
uniform across components; the GPU channel reports instantaneous watts.
Timestamps within one component stream are strictly increasing and the
sampling loop is the sole writer of the log.
"""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .errors import InvalidReadingError, InvalidWindowError, MalformedSeriesError

DEFAULT_INTERVAL_MS = 500

#: Precision floor of the underlying counters.
MIN_INTERVAL_MS = 1

#: Default counter range, microjoules. Real ranges are read from the
#: powercap `max_energy_range_uj` files; this fallback only matters for
#: traces that do not wrap.
DEFAULT_MAX_COUNTER_RANGE_UJ = 262_143_328_850


class Component(str, Enum):
    CPU = "cpu"
    RAM = "ram"
    GPU = "gpu"


#: Trace/backend channel names.
CHANNEL_CPU_UJ = "cpu_uj"
CHANNEL_RAM_UJ = "ram_uj"
CHANNEL_GPU_W = "gpu_w"
CHANNEL_CPU_TEMP = "cpu_temp_c"
CHANNEL_GPU_TEMP = "gpu_temp_c"

COUNTER_CHANNELS = {CHANNEL_CPU_UJ: Component.CPU, CHANNEL_RAM_UJ: Component.RAM}
POWER_CHANNELS = {**COUNTER_CHANNELS, CHANNEL_GPU_W: Component.GPU}
TEMP_CHANNELS = (CHANNEL_CPU_TEMP, CHANNEL_GPU_TEMP)
KNOWN_CHANNELS = tuple(POWER_CHANNELS) + TEMP_CHANNELS


@dataclass(frozen=True)
class PowerSample:
    """One timestamped per-component power/temperature reading."""

    t: int
    component: Component
    power_w: float
    temp_c: float | None = None

    def __post_init__(self) -> None:
        if self.power_w < 0:
            raise InvalidReadingError(
                f"gross power is never negative, got {self.power_w} W at t={self.t}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": int(self.t),
                "component": self.component.value,
                "power_w": self.power_w,
                "temp_c": self.temp_c,
            }
        )

    @staticmethod
    def from_json(line: str) -> "PowerSample":
        obj = json.loads(line)
        return PowerSample(
            t=int(obj["t"]),
            component=Component(obj["component"]),
            power_w=float(obj["power_w"]),
            temp_c=None if obj.get("temp_c") is None else float(obj["temp_c"]),
        )


@dataclass
class SamplerConfig:
    """Sampling loop configuration.

    `backends` holds backend descriptors: ``"replay:<trace.csv>"``,
    ``"rapl"``, ``"nvidia-smi"``, ``"cpu-temp"``. Descriptor-specific
    options (sysfs paths, commands) go in `backend_options`.
    """

    interval_ms: int = DEFAULT_INTERVAL_MS
    backends: tuple[str, ...] = ()
    log_path: Path = Path("energy_log.jsonl")
    max_counter_range: dict[Component, int] = field(
        default_factory=lambda: {
            Component.CPU: DEFAULT_MAX_COUNTER_RANGE_UJ,
            Component.RAM: DEFAULT_MAX_COUNTER_RANGE_UJ,
        }
    )
    backend_options: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.interval_ms < MIN_INTERVAL_MS:
            raise ValueError(
                f"interval must be >= {MIN_INTERVAL_MS} ms, got {self.interval_ms}"
            )
        self.log_path = Path(self.log_path)
        self.backends = tuple(self.backends)


def counter_delta_energy(prev: int, curr: int, max_range: int) -> float:
    """Energy in joules between two cumulative microjoule counter readings.

    Counters are cumulative and wrap at `max_range`; a reading lower than
    its predecessor is treated as exactly one wrap.
    """
    if max_range <= 0:
        raise InvalidReadingError(f"max_range must be positive, got {max_range}")
    for name, value in (("prev", prev), ("curr", curr)):
        if value < 0 or value > max_range:
            raise InvalidReadingError(
                f"{name}={value} outside valid counter range [0, {max_range}]"
            )
    if curr >= prev:
        delta = curr - prev
    else:
        delta = max_range - prev + curr
    return delta / 1e6


def integrate_power(
    samples: Sequence[PowerSample],
    t_start: int,
    t_end: int,
    interval_ms: int,
) -> float:
    """Rectangle-rule energy over the half-open window [t_start, t_end).

    Each sample contributes power * interval; an empty selection yields 0.
    The window is half-open so adjacent windows add exactly.
    """
    if t_end < t_start:
        raise InvalidWindowError(f"t_end={t_end} earlier than t_start={t_start}")
    last_t: dict[Component, int] = {}
    total = 0.0
    for sample in samples:
        prev = last_t.get(sample.component)
        if prev is not None and sample.t <= prev:
            raise MalformedSeriesError(
                f"{sample.component.value} samples not strictly increasing at t={sample.t}"
            )
        last_t[sample.component] = sample.t
        if t_start <= sample.t < t_end:
            total += sample.power_w * (interval_ms / 1000.0)
    return total


def append_samples(fh: IO[str], samples: Iterable[PowerSample]) -> None:
    """Append one tick's samples to an open log and flush."""
    for sample in samples:
        fh.write(sample.to_json() + "\n")
    fh.flush()


def read_log(path: Path | str) -> list[PowerSample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PowerSample.from_json(line))
    return out


def iter_log(path: Path | str) -> Iterator[PowerSample]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield PowerSample.from_json(line)


def split_by_component(
    samples: Iterable[PowerSample],
) -> dict[Component, list[PowerSample]]:
    out: dict[Component, list[PowerSample]] = defaultdict(list)
    for sample in samples:
        out[sample.component].append(sample)
    return dict(out)


def last_window_by_component(
    samples: Iterable[PowerSample], window: int
) -> dict[Component, list[PowerSample]]:
    """Most recent `window` samples per component, oldest first."""
    streams = split_by_component(samples)
    return {c: s[-window:] for c, s in streams.items()}


def latest_temperatures(
    samples: Iterable[PowerSample],
) -> tuple[float | None, float | None]:
    """Most recent CPU and GPU temperature found in a sample stream."""
    cpu = gpu = None
    for sample in samples:
        if sample.temp_c is None:
            continue
        if sample.component is Component.CPU:
            cpu = sample.temp_c
        elif sample.component is Component.GPU:
            gpu = sample.temp_c
    return cpu, gpu


class SamplerHandle:
    """Handle for a running sampling loop.

    The loop is the sole writer of the log; a stop request is honored
    within one interval. `status` becomes ``"end-of-trace"`` when a
    replay backend exhausts its trace.
    """

    def __init__(self, thread: threading.Thread, stop_event: threading.Event):
        self._thread = thread
        self._stop = stop_event
        self.status = "running"
        self.error: Exception | None = None

    def stop(self) -> None:
        self._stop.set()
        self._thread.join()

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)

    @property
    def running(self) -> bool:
        return self._thread.is_alive()


def start_sampling(config: SamplerConfig) -> SamplerHandle:
    """Start the background sampling loop.

    Raises StartupError if any configured backend fails to initialize;
    the error names the channels that are missing as a result. Replay
    backends drain their trace and stop cleanly with `end-of-trace`.
    """
    from .backends import build_backends

    backends = build_backends(config)
    for backend in backends:
        backend.start()
    config.log_path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(config.log_path, "a", encoding="utf-8")

    converter = _TickConverter(config)
    stop_event = threading.Event()

    def loop() -> None:
        try:
            replay_exhausted = False
            prime_readings: list[tuple[int, str, float]] = []
            for backend in backends:
                prime_readings.extend(backend.prime())
            converter.prime(prime_readings)
            realtime = not any(backend.is_replay for backend in backends)
            while not stop_event.is_set():
                tick_readings: list[tuple[int, str, float]] = []
                any_alive = False
                for backend in backends:
                    readings = backend.poll()
                    if readings is not None:
                        any_alive = True
                        tick_readings.extend(readings)
                if not any_alive:
                    replay_exhausted = True
                    break
                append_samples(fh, converter.convert(tick_readings))
                if realtime and stop_event.wait(config.interval_ms / 1000.0):
                    break
            handle.status = "end-of-trace" if replay_exhausted else "stopped"
        except Exception as exc:  # surfaced via handle.error
            handle.status = "error"
            handle.error = exc
        finally:
            for backend in backends:
                backend.stop()
            fh.close()

    thread = threading.Thread(target=loop, name="callwatt-sampler", daemon=True)
    handle = SamplerHandle(thread, stop_event)
    thread.start()
    return handle


class _TickConverter:
    """Turns raw channel readings into log-schema PowerSamples.

    Counter channels need a previous reading, so their first reading
    seeds the delta and produces no sample. Per tick the emit order is
    fixed (cpu, ram, gpu) to keep replay logs byte-identical.
    """

    def __init__(self, config: SamplerConfig):
        self._config = config
        self._prev_counter: dict[str, float] = {}
        self._last_temp: dict[str, float] = {}

    def prime(self, readings: Iterable[tuple[int, str, float]]) -> None:
        """Seed counter deltas from pre-loop readings, emitting nothing."""
        for _, channel, value in readings:
            if channel in COUNTER_CHANNELS:
                self._prev_counter[channel] = value
            elif channel in TEMP_CHANNELS:
                self._last_temp[channel] = float(value)

    def convert(self, readings: Iterable[tuple[int, str, float]]) -> list[PowerSample]:
        power: dict[Component, tuple[int, float]] = {}
        for t, channel, value in readings:
            if channel in COUNTER_CHANNELS:
                component = COUNTER_CHANNELS[channel]
                prev = self._prev_counter.get(channel)
                self._prev_counter[channel] = value
                if prev is None:
                    continue
                max_range = self._config.max_counter_range.get(
                    component, DEFAULT_MAX_COUNTER_RANGE_UJ
                )
                joules = counter_delta_energy(int(prev), int(value), max_range)
                power[component] = (t, joules / (self._config.interval_ms / 1000.0))
            elif channel == CHANNEL_GPU_W:
                power[Component.GPU] = (t, float(value))
            elif channel in TEMP_CHANNELS:
                self._last_temp[channel] = float(value)

        samples = []
        temp_for = {
            Component.CPU: self._last_temp.get(CHANNEL_CPU_TEMP),
            Component.GPU: self._last_temp.get(CHANNEL_GPU_TEMP),
        }
        for component in (Component.CPU, Component.RAM, Component.GPU):
            if component in power:
                t, watts = power[component]
                samples.append(
                    PowerSample(
                        t=t,
                        component=component,
                        power_w=watts,
                        temp_c=temp_for.get(component),
                    )
                )
        return samples


def read_temperatures(backends: Sequence) -> tuple[float, float]:
    """Most recent (cpu, gpu) temperature in degrees Celsius.

    Queries the first backend in the stack that provides each channel.
    Replay backends serve their trace's temperature rows in order, one
    row pair per call. Raises UnavailableChannelError when no backend
    serves one of the channels; callers decide whether temperature
    gating is mandatory.
    """
    from .errors import UnavailableChannelError

    cpu = gpu = None
    for backend in backends:
        if cpu is None and CHANNEL_CPU_TEMP in backend.channels:
            cpu = backend.read_temperature(CHANNEL_CPU_TEMP)
        if gpu is None and CHANNEL_GPU_TEMP in backend.channels:
            gpu = backend.read_temperature(CHANNEL_GPU_TEMP)
    for backend in backends:
        advance = getattr(backend, "advance_temperatures", None)
        if advance is not None:
            advance()
    if cpu is None:
        raise UnavailableChannelError(f"no backend provides {CHANNEL_CPU_TEMP}")
    if gpu is None:
        raise UnavailableChannelError(f"no backend provides {CHANNEL_GPU_TEMP}")
    return cpu, gpu
