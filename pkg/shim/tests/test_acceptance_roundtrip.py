"""Secondary acceptance: full round trip against a replay daemon.

Drives the measurement stack exclusively through its external surfaces:
the `callwatt` CLI (calibrate, patch, daemon serve), the control
socket, and the experiment-file records. A patched fixture must produce
a record whose net energy equals the daemon's NET reply bit for bit,
whose execution_time_s matches the bracketing timestamps, and whose
below-resolution flag fires for a sub-interval call.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from callwatt_shim.client import DaemonClient
from conftest import RUNTIME_DIR, write_constant_trace

SHIM_SRC = Path(__file__).parent.parent / "src"

FIXTURE = """import slowtf

trainer = slowtf.Trainer()
count = trainer.fit([1.0] * 1000, seconds=1.2)
print("fitted", count)
"""


@pytest.fixture
def stack(tmp_path):
    """Calibrated config + running replay daemon, all via the CLI."""
    trace = write_constant_trace(tmp_path / "trace.csv", ticks=400, interval_ms=100)
    config = {
        "framework": "slowtf",
        "repetitions": 1,
        "interval_ms": 100,
        "backends": [f"replay:{trace}"],
        "log_path": str(tmp_path / "energy.jsonl"),
        "stable_state_path": str(tmp_path / "stable_state.json"),
        "output_dir": str(tmp_path / "experiment"),
        "socket_path": str(tmp_path / "daemon.sock"),
        "pace_replay": True,
        "replay_speed": 1.0,
        "shim_module": "callwatt_shim",
        "stability": {
            "window": 20,
            "cpu_max_temp_c": 55.0,
            "gpu_max_temp_c": 40.0,
            "check_interval_ms": 100,
            "wait_timeout_s": 30.0,
            "settle_after_execution_s": 0.3,
        },
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config, indent=2))

    subprocess.run(
        [sys.executable, "-m", "callwatt", "calibrate", "--config", str(config_path),
         "--duration", "10"],
        check=True, capture_output=True, text=True,
    )

    daemon = subprocess.Popen(
        [sys.executable, "-m", "callwatt", "daemon", "serve", "--config",
         str(config_path)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    client = DaemonClient(str(tmp_path / "daemon.sock"), timeout=5)
    deadline = time.monotonic() + 15
    ready = False
    while time.monotonic() < deadline:
        try:
            client.config()
            ready = True
            break
        except Exception:
            if daemon.poll() is not None:
                break
            time.sleep(0.1)
    if not ready:
        daemon.terminate()
        out = daemon.stdout.read() if daemon.stdout else ""
        pytest.fail(f"daemon did not come up: {out}")

    yield tmp_path, config_path, client

    daemon.send_signal(signal.SIGTERM)
    try:
        daemon.wait(timeout=10)
    except subprocess.TimeoutExpired:
        daemon.kill()


def test_shim_round_trip(stack):
    tmp_path, config_path, client = stack

    script = tmp_path / "fixture.py"
    script.write_text(FIXTURE)
    experiment_file = tmp_path / "records.jsonl"
    patch = subprocess.run(
        [sys.executable, "-m", "callwatt", "patch", "--level", "method",
         "--framework", "slowtf", "--experiment-file", str(experiment_file),
         "--config", str(config_path), str(script)],
        capture_output=True, text=True,
    )
    assert patch.returncode == 0, patch.stderr
    patched = tmp_path / "fixture.py.method.patched"
    assert patched.exists()
    report = json.loads((tmp_path / "fixture.py.method.patched.report.json").read_text())
    assert report["eligible"] == 2 and report["patched"] == 2

    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join([str(RUNTIME_DIR), str(SHIM_SRC)])
    env["CALLWATT_SOCKET"] = str(tmp_path / "daemon.sock")
    env.pop("CALLWATT_EXPERIMENT_FILE", None)
    run = subprocess.run(
        [sys.executable, str(patched)], env=env, capture_output=True, text=True,
        timeout=120,
    )
    assert run.returncode == 0, run.stderr
    assert "fitted 1000" in run.stdout

    records = [
        json.loads(line)
        for line in experiment_file.read_text().splitlines()
        if line.strip()
    ]
    assert [r["function_to_run"] for r in records] == [
        "slowtf.Trainer()", "slowtf.Trainer.fit()",
    ]
    constructor, fit = records

    # sub-interval call: flagged, energies null
    assert "below-resolution" in constructor["flags"]
    for component in ("cpu", "ram", "gpu"):
        assert constructor[component]["gross_j"] is None
        assert constructor[component]["net_j"] is None

    # measured call: timestamps bracket the execution exactly
    assert fit["end_ms"] >= fit["start_ms"] + 1200
    assert fit["execution_time_s"] == (fit["end_ms"] - fit["start_ms"]) / 1000.0
    assert fit["flags"] == []
    assert fit["settings"]["interval_ms"] == 100
    assert fit["settings"]["wait_unstable_s"] >= 0.0
    assert fit["settings"]["settle_s"] == 0.3
    assert fit["settings"]["stable_state"]["gpu"]["mean_power_w"] == 18.0
    assert fit["args_sizes"]["total_bytes"] == 8008  # 1000 floats + seconds kwarg

    # net energy equals the daemon's NET reply bit for bit
    net = client.net(fit["start_ms"], fit["end_ms"])
    for component in ("cpu", "ram", "gpu"):
        assert fit[component]["net_j"] == net[component]["net_j"]
        assert fit[component]["gross_j"] == net[component]["gross_j"]
        assert fit[component]["samples"], "window must contain samples"

    # samples in the record match the daemon's SLICE for the same window
    for component in ("cpu", "ram", "gpu"):
        slice_reply = client.slice(component, fit["start_ms"], fit["end_ms"])
        assert fit[component]["samples"] == slice_reply
