from __future__ import annotations

import os
from pathlib import Path

import pytest

from callwatt.backends import TraceFile
from callwatt.sampler import (
    CHANNEL_CPU_TEMP,
    CHANNEL_CPU_UJ,
    CHANNEL_GPU_TEMP,
    CHANNEL_GPU_W,
    CHANNEL_RAM_UJ,
)

TESTS_DIR = Path(__file__).parent
CORPUS_DIR = TESTS_DIR / "corpus"
GOLDEN_DIR = TESTS_DIR / "golden"
RUNTIME_DIR = TESTS_DIR / "fixtures_rt"


@pytest.fixture
def fixture_env() -> dict:
    """Subprocess env that resolves faketf and the no-op shim stub."""
    env = dict(os.environ)
    env["PYTHONPATH"] = str(RUNTIME_DIR)
    return env


def constant_trace_rows(
    *,
    ticks: int,
    interval_ms: int = 500,
    cpu_w: float = 10.0,
    ram_w: float = 2.0,
    gpu_w: float = 18.0,
    cpu_temp: float = 45.0,
    gpu_temp: float = 35.0,
    with_temps: bool = True,
):
    """Trace rows producing `ticks` constant-power samples per component.

    Counter channels get a seed row at t=0; integer-friendly powers keep
    the replayed values exact.
    """
    rows = [(0, CHANNEL_CPU_UJ, 0.0), (0, CHANNEL_RAM_UJ, 0.0)]
    if with_temps:
        rows += [(0, CHANNEL_CPU_TEMP, cpu_temp), (0, CHANNEL_GPU_TEMP, gpu_temp)]
    cpu_uj = ram_uj = 0.0
    for k in range(1, ticks + 1):
        t = k * interval_ms
        cpu_uj += cpu_w * interval_ms * 1000
        ram_uj += ram_w * interval_ms * 1000
        rows.append((t, CHANNEL_CPU_UJ, cpu_uj))
        rows.append((t, CHANNEL_RAM_UJ, ram_uj))
        rows.append((t, CHANNEL_GPU_W, gpu_w))
        if with_temps:
            rows.append((t, CHANNEL_CPU_TEMP, cpu_temp))
            rows.append((t, CHANNEL_GPU_TEMP, gpu_temp))
    return rows


@pytest.fixture
def write_trace(tmp_path):
    def _write(rows, name="trace.csv"):
        path = tmp_path / name
        TraceFile.save(path, rows)
        return path

    return _write
