"""Measurement record schema (JSON lines, one object per execution).

This is the wire format the runtime breakpoints append to the
experiment file and the format every analysis entry point consumes.
Field layout::

    {
      "function_to_run": str,
      "start_ms": int, "end_ms": int, "execution_time_s": float,
      "cpu": {"gross_j": float|null, "net_j": float|null, "samples": [...]},
      "ram": {...}, "gpu": {...},
      "settings": {"interval_ms":..., "wait_unstable_s":..., "settle_s":...,
                   "cpu_max_temp":..., "gpu_max_temp":..., "stable_state": {...}},
      "args_sizes": {"per_arg": [...], "total_bytes": int},
      "flags": [...]
    }

Energy fields are null (and a "below-resolution" flag set) when the
execution was shorter than the sampling interval. Records are
append-only; re-running an experiment never mutates prior ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .sampler import Component, PowerSample

FLAG_BELOW_RESOLUTION = "below-resolution"
FLAG_RUN_FAILED = "run-failed"
FLAG_STABILITY_TIMEOUT = "stability-timeout"
FLAG_NON_SIZABLE_ARG = "non-sizable-arg"

#: Records carrying any of these flags are excluded from aggregation.
EXCLUSION_FLAGS = frozenset(
    {FLAG_BELOW_RESOLUTION, FLAG_RUN_FAILED, FLAG_STABILITY_TIMEOUT}
)


@dataclass
class ComponentEnergy:
    gross_j: float | None
    net_j: float | None
    samples: list[PowerSample] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "gross_j": self.gross_j,
            "net_j": self.net_j,
            "samples": [json.loads(s.to_json()) for s in self.samples],
        }

    @staticmethod
    def from_dict(obj: Mapping) -> "ComponentEnergy":
        return ComponentEnergy(
            gross_j=obj.get("gross_j"),
            net_j=obj.get("net_j"),
            samples=[PowerSample.from_json(json.dumps(s)) for s in obj.get("samples", [])],
        )


@dataclass
class RecordSettings:
    interval_ms: int
    wait_unstable_s: float
    settle_s: float
    cpu_max_temp: float
    gpu_max_temp: float
    stable_state: dict

    def to_dict(self) -> dict:
        return {
            "interval_ms": self.interval_ms,
            "wait_unstable_s": self.wait_unstable_s,
            "settle_s": self.settle_s,
            "cpu_max_temp": self.cpu_max_temp,
            "gpu_max_temp": self.gpu_max_temp,
            "stable_state": self.stable_state,
        }

    @staticmethod
    def from_dict(obj: Mapping) -> "RecordSettings":
        return RecordSettings(
            interval_ms=int(obj["interval_ms"]),
            wait_unstable_s=float(obj["wait_unstable_s"]),
            settle_s=float(obj["settle_s"]),
            cpu_max_temp=float(obj["cpu_max_temp"]),
            gpu_max_temp=float(obj["gpu_max_temp"]),
            stable_state=dict(obj.get("stable_state", {})),
        )


@dataclass
class MeasurementRecord:
    """One instrumented execution of one call site."""

    function_to_run: str
    start_ms: int
    end_ms: int
    execution_time_s: float
    components: dict[Component, ComponentEnergy]
    settings: RecordSettings
    args_sizes: dict
    flags: list[str] = field(default_factory=list)

    @property
    def excluded(self) -> bool:
        return any(flag in EXCLUSION_FLAGS for flag in self.flags)

    def net_j(self, component: Component) -> float | None:
        entry = self.components.get(component)
        return None if entry is None else entry.net_j

    def to_dict(self) -> dict:
        out: dict = {
            "function_to_run": self.function_to_run,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "execution_time_s": self.execution_time_s,
        }
        for component in Component:
            if component in self.components:
                out[component.value] = self.components[component].to_dict()
        out["settings"] = self.settings.to_dict()
        out["args_sizes"] = self.args_sizes
        out["flags"] = list(self.flags)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(obj: Mapping) -> "MeasurementRecord":
        components = {
            component: ComponentEnergy.from_dict(obj[component.value])
            for component in Component
            if component.value in obj
        }
        return MeasurementRecord(
            function_to_run=obj["function_to_run"],
            start_ms=int(obj["start_ms"]),
            end_ms=int(obj["end_ms"]),
            execution_time_s=float(obj["execution_time_s"]),
            components=components,
            settings=RecordSettings.from_dict(obj["settings"]),
            args_sizes=dict(obj.get("args_sizes", {})),
            flags=list(obj.get("flags", [])),
        )


def append_record(path: Path | str, record: MeasurementRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def read_records(path: Path | str) -> list[MeasurementRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(MeasurementRecord.from_dict(json.loads(line)))
    return out


def read_records_dir(directory: Path | str) -> list[MeasurementRecord]:
    """All records under a directory tree, sorted by file path.

    Hidden directories (scratch space like replay logs) are skipped.
    """
    directory = Path(directory)
    records = []
    for path in sorted(directory.rglob("*.jsonl")):
        relative = path.relative_to(directory)
        if any(part.startswith(".") for part in relative.parts):
            continue
        records.extend(read_records(path))
    return records


def group_by_function(
    records: Iterable[MeasurementRecord],
) -> dict[str, list[MeasurementRecord]]:
    groups: dict[str, list[MeasurementRecord]] = {}
    for record in records:
        groups.setdefault(record.function_to_run, []).append(record)
    return groups
