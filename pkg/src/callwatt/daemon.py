"""Measurement daemon: sampling loop plus line-oriented control socket.

The daemon owns the energy log (its sampler is the sole writer) and
answers measurement clients over a local stream socket, one request per
line:

    STABLE?                  -> STABLE | UNSTABLE
    SLICE <component> <t0> <t1> -> one JSON sample per line, then END
    STABLE_STATE             -> stable-state JSON, one line
    NET <t0> <t1>            -> per-component {"gross_j":..., "net_j":...} JSON
    CONFIG                   -> experiment settings JSON (interval,
                                thresholds, settle/wait timing)

Windows are half-open [t0, t1). In paced replay mode the daemon maps
wall-clock request times onto the trace's own timeline: the trace
anchors to the wall clock when serving starts, samples become visible
as their trace time is reached, and incoming window bounds are
translated the same way. The log itself always carries pure trace
timestamps, which keeps replay runs byte-identical.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import analysis
from .errors import DaemonError, InsufficientDataError, UndefinedCVError
from .sampler import (
    Component,
    PowerSample,
    SamplerConfig,
    last_window_by_component,
    latest_temperatures,
    read_log,
    start_sampling,
)
from .stability import (
    StabilityConfig,
    StableState,
    is_energy_stable,
    is_temperature_ok,
)


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass
class DaemonSettings:
    socket_path: Path
    sampler: SamplerConfig
    stability: StabilityConfig
    stable_state_path: Path
    pace_replay: bool = True
    replay_speed: float = 1.0


class Daemon:
    """Single-writer sampling daemon with a control socket."""

    def __init__(self, settings: DaemonSettings):
        self.settings = settings
        self.stable_state = StableState.load(settings.stable_state_path)
        self._handle = None
        self._server: socket.socket | None = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._replay = any(
            b.startswith("replay:") for b in settings.sampler.backends
        )
        self._anchor_wall_ms: int | None = None
        self._trace_origin_ms: int | None = None

    # -- lifecycle ----------------------------------------------------

    def start(self) -> None:
        if self._replay and self.settings.sampler.log_path.exists():
            # a replay log is regenerated from its trace; stale content
            # would break per-component timestamp monotonicity
            self.settings.sampler.log_path.unlink()
        self._handle = start_sampling(self.settings.sampler)
        if self._replay:
            # replay drains the whole trace up front; wait for it
            self._handle.join(timeout=60)
            if self._handle.error is not None:
                raise self._handle.error
            samples = read_log(self.settings.sampler.log_path)
            if samples:
                self._trace_origin_ms = samples[0].t
        self._anchor_wall_ms = _now_ms()

        path = self.settings.socket_path
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists():
            path.unlink()
        self._server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._server.bind(str(path))
        self._server.listen(8)
        self._server.settimeout(0.2)
        accept_thread = threading.Thread(
            target=self._accept_loop, name="callwatt-daemon", daemon=True
        )
        accept_thread.start()
        self._threads.append(accept_thread)

    def stop(self) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=5)
        if self._server is not None:
            self._server.close()
            self._server = None
        if self.settings.socket_path.exists():
            self.settings.socket_path.unlink()
        if self._handle is not None and self._handle.running:
            self._handle.stop()

    def _accept_loop(self) -> None:
        assert self._server is not None
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            worker = threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            )
            worker.start()

    def _serve_connection(self, conn: socket.socket) -> None:
        # separate read/write streams: a shared rw wrapper drops its
        # read-ahead buffer on the first write
        with conn, conn.makefile("r", encoding="utf-8", newline="\n") as reader, \
                conn.makefile("w", encoding="utf-8", newline="\n") as writer:
            for line in reader:
                line = line.strip()
                if not line:
                    continue
                for reply in self.handle_request(line):
                    writer.write(reply + "\n")
                writer.flush()

    # -- time translation ----------------------------------------------

    def _paced(self) -> bool:
        return self._replay and self.settings.pace_replay

    def _to_trace_ms(self, wall_ms: int) -> int:
        if not self._paced() or self._trace_origin_ms is None:
            return wall_ms
        assert self._anchor_wall_ms is not None
        offset = (wall_ms - self._anchor_wall_ms) * self.settings.replay_speed
        return self._trace_origin_ms + int(offset)

    def _visible_samples(self) -> list[PowerSample]:
        samples = read_log(self.settings.sampler.log_path)
        if not self._paced():
            return samples
        horizon = self._to_trace_ms(_now_ms())
        return [s for s in samples if s.t <= horizon]

    # -- request handling -----------------------------------------------

    def handle_request(self, line: str) -> list[str]:
        try:
            command, *args = line.split()
            if command == "STABLE?":
                return ["STABLE" if self._is_stable() else "UNSTABLE"]
            if command == "SLICE" and len(args) == 3:
                return self._slice(args[0], int(args[1]), int(args[2]))
            if command == "STABLE_STATE":
                return [json.dumps(self.stable_state.to_dict())]
            if command == "NET" and len(args) == 2:
                return [self._net(int(args[0]), int(args[1]))]
            if command == "CONFIG":
                return [json.dumps(self.describe_config())]
            return [f"ERR unknown command: {line}"]
        except Exception as exc:  # protocol errors must not kill the daemon
            return [f"ERR {type(exc).__name__}: {exc}"]

    def _is_stable(self) -> bool:
        samples = self._visible_samples()
        cpu_temp, gpu_temp = latest_temperatures(samples)
        if cpu_temp is not None or gpu_temp is not None:
            ok = is_temperature_ok(
                cpu_temp if cpu_temp is not None else 0.0,
                gpu_temp if gpu_temp is not None else 0.0,
                self.settings.stability,
            )
            if not ok:
                return False
        window = last_window_by_component(samples, self.settings.stability.window)
        try:
            return is_energy_stable(
                window,
                self.stable_state,
                window=self.settings.stability.window,
                components=tuple(self.stable_state.baselines),
            )
        except (InsufficientDataError, UndefinedCVError):
            return False

    def _slice(self, component: str, t0: int, t1: int) -> list[str]:
        comp = Component(component)
        trace_t0, trace_t1 = self._to_trace_ms(t0), self._to_trace_ms(t1)
        lines = [
            s.to_json()
            for s in self._visible_samples()
            if s.component is comp and trace_t0 <= s.t < trace_t1
        ]
        return lines + ["END"]

    def _net(self, t0: int, t1: int) -> str:
        trace_t0, trace_t1 = self._to_trace_ms(t0), self._to_trace_ms(t1)
        result = analysis.net_energy(
            self._visible_samples(),
            self.stable_state,
            trace_t0,
            trace_t1,
            self.settings.sampler.interval_ms,
        )
        payload = {
            component.value: {
                "gross_j": result.gross_j[component],
                "net_j": result.net_j[component],
            }
            for component in sorted(result.net_j, key=lambda c: c.value)
        }
        return json.dumps(payload)

    def describe_config(self) -> dict:
        stability = self.settings.stability
        return {
            "interval_ms": self.settings.sampler.interval_ms,
            "window": stability.window,
            "check_interval_ms": stability.check_interval_ms,
            "wait_timeout_s": stability.wait_timeout_s,
            "settle_s": stability.settle_after_execution_s,
            "cpu_max_temp": stability.cpu_max_temp_c,
            "gpu_max_temp": stability.gpu_max_temp_c,
            "replay": self._replay,
            "paced": self._paced(),
        }


class DaemonClient:
    """Small request/reply client for the control socket."""

    def __init__(self, socket_path: Path | str, timeout: float = 10.0):
        self.socket_path = str(socket_path)
        self.timeout = timeout

    def _request(self, line: str, *, multiline: bool = False) -> list[str]:
        try:
            conn = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            conn.settimeout(self.timeout)
            conn.connect(self.socket_path)
        except OSError as exc:
            raise DaemonError(f"daemon unreachable at {self.socket_path}: {exc}") from exc
        with conn, conn.makefile("r", encoding="utf-8", newline="\n") as reader, \
                conn.makefile("w", encoding="utf-8", newline="\n") as writer:
            writer.write(line + "\n")
            writer.flush()
            replies: list[str] = []
            for reply in reader:
                reply = reply.rstrip("\n")
                if reply.startswith("ERR"):
                    raise DaemonError(reply)
                if multiline and reply == "END":
                    return replies
                replies.append(reply)
                if not multiline:
                    return replies
        if multiline:
            raise DaemonError(f"truncated reply to {line!r}")
        raise DaemonError(f"no reply to {line!r}")

    def is_stable(self) -> bool:
        return self._request("STABLE?")[0] == "STABLE"

    def slice(self, component: Component | str, t0: int, t1: int) -> list[PowerSample]:
        name = component.value if isinstance(component, Component) else component
        lines = self._request(f"SLICE {name} {t0} {t1}", multiline=True)
        return [PowerSample.from_json(line) for line in lines]

    def stable_state(self) -> dict:
        return json.loads(self._request("STABLE_STATE")[0])

    def net(self, t0: int, t1: int) -> dict:
        return json.loads(self._request(f"NET {t0} {t1}")[0])

    def config(self) -> dict:
        return json.loads(self._request("CONFIG")[0])

    def ping(self) -> bool:
        try:
            self.config()
            return True
        except DaemonError:
            return False
