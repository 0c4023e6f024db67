from __future__ import annotations

import json
import socket
import threading
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
RUNTIME_DIR = TESTS_DIR / "rt"


def write_constant_trace(path: Path, *, ticks: int, interval_ms: int) -> Path:
    """Constant 10/2/18 W trace with cool temperatures, counter-encoded."""
    lines = ["t_ms,channel,value"]
    lines.append("0,cpu_uj,0.0")
    lines.append("0,ram_uj,0.0")
    lines.append("0,cpu_temp_c,45.0")
    lines.append("0,gpu_temp_c,35.0")
    cpu_uj = ram_uj = 0.0
    for k in range(1, ticks + 1):
        t = k * interval_ms
        cpu_uj += 10.0 * interval_ms * 1000
        ram_uj += 2.0 * interval_ms * 1000
        lines.append(f"{t},cpu_uj,{cpu_uj}")
        lines.append(f"{t},ram_uj,{ram_uj}")
        lines.append(f"{t},gpu_w,18.0")
        lines.append(f"{t},cpu_temp_c,45.0")
        lines.append(f"{t},gpu_temp_c,35.0")
    path.write_text("\n".join(lines) + "\n")
    return path


class FakeDaemon:
    """Minimal in-process control-socket server with canned replies."""

    def __init__(self, path: Path, *, stable_after: int = 0):
        self.path = path
        self.stable_after = stable_after
        self.stable_queries = 0
        self.requests: list[str] = []
        self._server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._server.bind(str(path))
        self._server.listen(4)
        self._server.settimeout(0.2)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    config = {
        "interval_ms": 100,
        "window": 20,
        "check_interval_ms": 50,
        "wait_timeout_s": 1.0,
        "settle_s": 0.0,
        "cpu_max_temp": 55.0,
        "gpu_max_temp": 40.0,
    }
    stable_state = {
        "cpu": {"mean_power_w": 10.0, "cv": 0.01},
        "ram": {"mean_power_w": 2.0, "cv": 0.01},
        "gpu": {"mean_power_w": 18.0, "cv": 0.01},
        "calibration_s": 600.0,
        "calibrated_at": 0.0,
    }

    def _loop(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn):
        with conn, conn.makefile("r", encoding="utf-8") as reader, \
                conn.makefile("w", encoding="utf-8") as writer:
            for line in reader:
                line = line.strip()
                if not line:
                    continue
                self.requests.append(line)
                for reply in self._reply(line):
                    writer.write(reply + "\n")
                writer.flush()

    def _reply(self, line: str) -> list[str]:
        if line == "STABLE?":
            self.stable_queries += 1
            return ["STABLE" if self.stable_queries > self.stable_after else "UNSTABLE"]
        if line == "CONFIG":
            return [json.dumps(self.config)]
        if line == "STABLE_STATE":
            return [json.dumps(self.stable_state)]
        if line.startswith("SLICE"):
            _, component, t0, t1 = line.split()
            t0, t1 = int(t0), int(t1)
            power = {"cpu": 30.0, "ram": 4.0, "gpu": 42.0}[component]
            samples = [
                json.dumps(
                    {"t": t, "component": component, "power_w": power, "temp_c": None}
                )
                for t in range(t0, t1, self.config["interval_ms"])
            ]
            return samples + ["END"]
        if line.startswith("NET"):
            _, t0, t1 = line.split()
            duration = (int(t1) - int(t0)) / 1000.0
            payload = {}
            for component, power in (("cpu", 30.0), ("ram", 4.0), ("gpu", 42.0)):
                gross = power * duration
                base = self.stable_state[component]["mean_power_w"]
                payload[component] = {"gross_j": gross, "net_j": gross - base * duration}
            return [json.dumps(payload)]
        return [f"ERR unknown: {line}"]

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=2)
        self._server.close()
        if self.path.exists():
            self.path.unlink()


@pytest.fixture
def fake_daemon(tmp_path, monkeypatch):
    daemon = FakeDaemon(tmp_path / "fake.sock")
    monkeypatch.setenv("CALLWATT_SOCKET", str(daemon.path))
    monkeypatch.delenv("CALLWATT_EXPERIMENT_FILE", raising=False)
    yield daemon
    daemon.stop()
