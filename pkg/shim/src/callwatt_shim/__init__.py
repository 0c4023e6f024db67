"""Runtime measurement breakpoints for instrumented scripts.

Patched scripts call `before_execution_INSERTED_INTO_SCRIPT` right
before a framework API call and `after_execution_INSERTED_INTO_SCRIPT`
right after it. The before-breakpoint blocks until the daemon reports
the machine stable and captures the start time; the after-breakpoint
waits out tail power, fetches the window's samples and net energy from
the daemon, and appends one measurement record to the experiment file.

All energy math lives daemon-side: the record's gross/net joules are
copied verbatim from the daemon's NET reply, never recomputed here.

Environment: CALLWATT_SOCKET points at the daemon's control socket;
CALLWATT_EXPERIMENT_FILE, when set by the runner, overrides the
experiment file path baked into the patched script (one file per
repetition).

One measurement may be outstanding per process; nesting breakpoint
pairs is an error.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

from .client import (
    DaemonClient,
    DaemonUnreachable,
    ShimError,
    StabilityTimeout,
    socket_path_from_env,
)
from .sizing import size_arguments

__version__ = "0.1.0"

__all__ = [
    "before_execution_INSERTED_INTO_SCRIPT",
    "after_execution_INSERTED_INTO_SCRIPT",
    "StartTimes",
    "DaemonClient",
    "DaemonUnreachable",
    "ShimError",
    "StabilityTimeout",
    "socket_path_from_env",
]

EXPERIMENT_FILE_ENV = "CALLWATT_EXPERIMENT_FILE"

FLAG_BELOW_RESOLUTION = "below-resolution"
FLAG_STABILITY_TIMEOUT = "stability-timeout"

COMPONENTS = ("cpu", "ram", "gpu")


@dataclass
class StartTimes:
    """Measurement start: epoch ms plus per-component slice cursors.

    A cursor is the timestamp lower bound of the slice the
    after-breakpoint will request; it points at or before the first
    sample with timestamp >= start.
    """

    start_ms: int
    cursors: dict[str, int] = field(default_factory=dict)


@dataclass
class _PendingMeasurement:
    start_times: StartTimes
    function_to_run: str
    experiment_file_path: str
    waited_s: float
    config: dict
    stable_state: dict
    client: DaemonClient


_pending: list[_PendingMeasurement] = []


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _experiment_file(declared_path) -> str:
    return os.environ.get(EXPERIMENT_FILE_ENV, str(declared_path))


def before_execution_INSERTED_INTO_SCRIPT(
    experiment_file_path, function_to_run
) -> StartTimes:
    """Gate on machine stability, then capture the start time."""
    if _pending:
        raise ShimError(
            "nested measurement: before_execution called while "
            f"{_pending[-1].function_to_run!r} is still being measured"
        )
    client = DaemonClient(socket_path_from_env())
    config = client.config()
    stable_state = client.stable_state()

    check_interval_s = config.get("check_interval_ms", 1000) / 1000.0
    timeout_s = config.get("wait_timeout_s", 300.0)
    started = time.monotonic()
    while not client.is_stable():
        waited = time.monotonic() - started
        if waited >= timeout_s:
            _write_timeout_record(
                _experiment_file(experiment_file_path), function_to_run,
                waited, config, stable_state,
            )
            raise StabilityTimeout(
                f"machine not stable within {timeout_s}s before {function_to_run}"
            )
        time.sleep(check_interval_s)
    waited_s = time.monotonic() - started

    start_ms = _now_ms()
    start_times = StartTimes(
        start_ms=start_ms, cursors={c: start_ms for c in COMPONENTS}
    )
    _pending.append(
        _PendingMeasurement(
            start_times=start_times,
            function_to_run=function_to_run,
            experiment_file_path=_experiment_file(experiment_file_path),
            waited_s=waited_s,
            config=config,
            stable_state=stable_state,
            client=client,
        )
    )
    return start_times


def after_execution_INSERTED_INTO_SCRIPT(
    start_times,
    experiment_file_path,
    function_to_run,
    method_object=None,
    function_args=None,
    function_kwargs=None,
) -> None:
    """Close the measurement window and append one record."""
    end_ms = _now_ms()
    if not _pending:
        raise ShimError(
            f"after_execution for {function_to_run!r} without matching before_execution"
        )
    pending = _pending.pop()
    if pending.start_times is not start_times:
        _pending.append(pending)
        raise ShimError(
            "mismatched start_times: breakpoint pairs must not interleave"
        )

    config = pending.config
    settle_s = config.get("settle_s", 10.0)
    if settle_s:
        time.sleep(settle_s)  # let tail power decay before reading sensors

    start_ms = pending.start_times.start_ms
    execution_time_s = (end_ms - start_ms) / 1000.0
    interval_ms = int(config.get("interval_ms", 500))

    slices = {
        component: pending.client.slice(component, start_ms, end_ms)
        for component in pending.stable_state
        if component in COMPONENTS
    }
    flags: list[str] = []
    below_resolution = (end_ms - start_ms) < interval_ms or any(
        not window for window in slices.values()
    )
    components: dict[str, dict] = {}
    if below_resolution:
        flags.append(FLAG_BELOW_RESOLUTION)
        for component, window in slices.items():
            components[component] = {
                "gross_j": None, "net_j": None, "samples": window,
            }
    else:
        net_reply = pending.client.net(start_ms, end_ms)
        for component, window in slices.items():
            energy = net_reply.get(component, {})
            components[component] = {
                # verbatim daemon values: the shim never recomputes energy
                "gross_j": energy.get("gross_j"),
                "net_j": energy.get("net_j"),
                "samples": window,
            }

    args_sizes, size_flags = size_arguments(function_args, function_kwargs)
    flags.extend(size_flags)

    record = {
        "function_to_run": function_to_run,
        "start_ms": start_ms,
        "end_ms": end_ms,
        "execution_time_s": execution_time_s,
    }
    for component in COMPONENTS:
        if component in components:
            record[component] = components[component]
    record["settings"] = {
        "interval_ms": interval_ms,
        "wait_unstable_s": pending.waited_s,
        "settle_s": settle_s,
        "cpu_max_temp": config.get("cpu_max_temp"),
        "gpu_max_temp": config.get("gpu_max_temp"),
        "stable_state": pending.stable_state,
    }
    record["args_sizes"] = args_sizes
    record["flags"] = flags
    _append_record(pending.experiment_file_path, record)


def _write_timeout_record(
    path: str, function_to_run: str, waited_s: float, config: dict, stable_state: dict
) -> None:
    now = _now_ms()
    record = {
        "function_to_run": function_to_run,
        "start_ms": now,
        "end_ms": now,
        "execution_time_s": 0.0,
        "settings": {
            "interval_ms": int(config.get("interval_ms", 500)),
            "wait_unstable_s": waited_s,
            "settle_s": config.get("settle_s", 10.0),
            "cpu_max_temp": config.get("cpu_max_temp"),
            "gpu_max_temp": config.get("gpu_max_temp"),
            "stable_state": stable_state,
        },
        "args_sizes": {"per_arg": [], "total_bytes": 0},
        "flags": [FLAG_STABILITY_TIMEOUT],
    }
    _append_record(path, record)


def _append_record(path: str, record: dict) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")
