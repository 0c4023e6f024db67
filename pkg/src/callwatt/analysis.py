"""Net energy, repetition aggregation, and measurement statistics.

Net energy over a window is the gross rectangle-rule energy minus the
no-load baseline mean power times the window duration; it may be
negative (idle-below-baseline components). Aggregation uses the
arithmetic mean and population standard deviation over repetitions.

The project-vs-methods comparison checks that the summed in-scope
method energy does not exceed the project-level energy, per component;
a violation signals double counting in the measurement pipeline, so it
is reported rather than raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from scipy.special import betainc

from .errors import (
    DegenerateTestError,
    InvalidWindowError,
    UndefinedCorrelationError,
)
from .records import MeasurementRecord
from .sampler import Component, PowerSample, integrate_power, split_by_component
from .stability import StableState

#: Input-size sweep fractions: k/10 of the original data, k = 1..10.
FRACTIONS = tuple(k / 10 for k in range(1, 11))

#: Largest sample count for which the signed-rank null distribution is
#: enumerated exactly.
EXACT_WILCOXON_MAX_N = 20

DEFAULT_REPETITIONS = 10


@dataclass
class NetEnergyResult:
    """Gross and net joules per component for one execution window."""

    gross_j: dict[Component, float]
    net_j: dict[Component, float]
    duration_s: float
    repetition: int = 0
    function_to_run: str | None = None


@dataclass
class AggregateResult:
    """Mean net energy over repetitions of one experiment."""

    mean_net_j: dict[Component, float]
    std_net_j: dict[Component, float]
    count: int
    mean_duration_s: float
    function_to_run: str | None = None


@dataclass
class Eq1Report:
    """Project energy vs. summed in-scope method energy, per component."""

    e_project: dict[Component, float]
    e_methods: dict[Component, float]
    e_out_of_scope: dict[Component, float]
    out_of_scope_share: dict[Component, float | None]
    verdict: dict[Component, bool]

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())


@dataclass
class TestResult:
    statistic: float
    p_value: float
    method: str  # "pearson" | "wilcoxon_exact" | "wilcoxon_normal"
    alternative: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")


def net_energy(
    samples: Sequence[PowerSample],
    baseline_mean_power: float | Mapping[Component, float] | StableState,
    t_start: int,
    t_end: int,
    interval_ms: int,
    *,
    repetition: int = 0,
    function_to_run: str | None = None,
) -> NetEnergyResult:
    """Net energy per component over the half-open window [t_start, t_end).

    `baseline_mean_power` is a scalar applied to every component present
    in `samples`, or a per-component mapping / StableState.
    """
    if t_end < t_start:
        raise InvalidWindowError(f"t_end={t_end} earlier than t_start={t_start}")
    if isinstance(baseline_mean_power, StableState):
        baseline_map: Mapping[Component, float] = baseline_mean_power.mean_power_map()
    elif isinstance(baseline_mean_power, Mapping):
        baseline_map = baseline_mean_power
    else:
        baseline_map = {c: float(baseline_mean_power) for c in Component}

    duration_s = (t_end - t_start) / 1000.0
    gross: dict[Component, float] = {}
    net: dict[Component, float] = {}
    for component, stream in split_by_component(samples).items():
        if component not in baseline_map:
            raise ValueError(
                f"no baseline mean power for component {component.value!r}"
            )
        gross_j = integrate_power(stream, t_start, t_end, interval_ms)
        gross[component] = gross_j
        net[component] = gross_j - baseline_map[component] * duration_s
    return NetEnergyResult(
        gross_j=gross,
        net_j=net,
        duration_s=duration_s,
        repetition=repetition,
        function_to_run=function_to_run,
    )


def _population_std(values: Sequence[float]) -> float:
    mean = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))


def aggregate_repetitions(
    results: Sequence[NetEnergyResult],
    *,
    function_to_run: str | None = None,
) -> AggregateResult:
    """Arithmetic mean and population sigma of net energy per component."""
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    names = {r.function_to_run for r in results if r.function_to_run is not None}
    if function_to_run is None and len(names) == 1:
        function_to_run = names.pop()
    elif len(names) > 1:
        raise ValueError(f"mixed experiments in one aggregation: {sorted(names)}")

    components = set(results[0].net_j)
    for result in results:
        if set(result.net_j) != components:
            raise ValueError("results cover different component sets")
    mean_net = {}
    std_net = {}
    for component in components:
        values = [r.net_j[component] for r in results]
        mean_net[component] = math.fsum(values) / len(values)
        std_net[component] = _population_std(values)
    return AggregateResult(
        mean_net_j=mean_net,
        std_net_j=std_net,
        count=len(results),
        mean_duration_s=math.fsum(r.duration_s for r in results) / len(results),
        function_to_run=function_to_run,
    )


def result_from_record(record: MeasurementRecord) -> NetEnergyResult:
    """Lift a stored measurement record into a NetEnergyResult."""
    net = {}
    gross = {}
    for component, energy in record.components.items():
        if energy.net_j is None or energy.gross_j is None:
            raise ValueError(
                f"record {record.function_to_run} has null energy for "
                f"{component.value}; excluded records cannot be aggregated"
            )
        net[component] = energy.net_j
        gross[component] = energy.gross_j
    return NetEnergyResult(
        gross_j=gross,
        net_j=net,
        duration_s=record.execution_time_s,
        function_to_run=record.function_to_run,
    )


def aggregate_records(records: Sequence[MeasurementRecord]) -> AggregateResult:
    """Aggregate repetitions, skipping records excluded by flags."""
    usable = [r for r in records if not r.excluded]
    if not usable:
        raise ValueError("no usable records (all flagged)")
    return aggregate_repetitions([result_from_record(r) for r in usable])


def compare_project_vs_methods(
    project: AggregateResult, methods: Sequence[AggregateResult]
) -> Eq1Report:
    """Check summed in-scope method energy against project energy.

    The verdict is per component: pass iff E_methods <= E_project. The
    implied out-of-scope share is (E_project - E_methods) / E_project,
    None where the project energy is zero.
    """
    components = sorted(project.mean_net_j, key=lambda c: c.value)
    e_p = {c: project.mean_net_j[c] for c in components}
    e_ms = {
        c: math.fsum(m.mean_net_j.get(c, 0.0) for m in methods) for c in components
    }
    e_mo = {c: e_p[c] - e_ms[c] for c in components}
    share = {
        c: (e_mo[c] / e_p[c]) if e_p[c] != 0 else None for c in components
    }
    verdict = {c: e_ms[c] <= e_p[c] for c in components}
    return Eq1Report(
        e_project=e_p,
        e_methods=e_ms,
        e_out_of_scope=e_mo,
        out_of_scope_share=share,
        verdict=verdict,
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Pearson product-moment correlation with a two-sided p-value.

    The p-value uses the exact t transform of the coefficient with the
    Student-t tail evaluated through the regularized incomplete beta
    function.
    """
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    if n < 3:
        raise ValueError("pearson requires at least 3 points")
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    ss_x = math.fsum(v * v for v in dx)
    ss_y = math.fsum(v * v for v in dy)
    if ss_x == 0 or ss_y == 0:
        raise UndefinedCorrelationError("zero variance in one of the inputs")
    rho = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(ss_x * ss_y)
    rho = max(-1.0, min(1.0, rho))

    dof = n - 2
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t_sq = rho * rho * dof / (1 - rho * rho)
        p = float(betainc(dof / 2.0, 0.5, dof / (dof + t_sq)))
    return TestResult(statistic=rho, p_value=p, method="pearson", alternative="two-sided")


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks starting at 1; tied values share the average of their ranks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(
    a: Sequence[float],
    b: Sequence[float],
    alternative: str = "greater",
) -> TestResult:
    """One- or two-tailed Wilcoxon signed-rank test on paired samples.

    Differences a - b; zero differences are dropped; ties in |d| get
    averaged ranks. The statistic is W+, the rank sum of positive
    differences. For n <= 20 the p-value is exact over all 2**n sign
    assignments (computed by convolving the rank distribution, which
    enumerates the same space); beyond that, a normal approximation
    with continuity and tie corrections is used.
    """
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    diffs = [ai - bi for ai, bi in zip(a, b) if ai - bi != 0]
    if not diffs:
        raise DegenerateTestError("all paired differences are zero")
    n = len(diffs)
    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = math.fsum(r for r, d in zip(ranks, diffs) if d > 0)

    if n <= EXACT_WILCOXON_MAX_N:
        p_greater, p_less = _exact_sign_tail(ranks, w_plus)
        method = "wilcoxon_exact"
    else:
        mean = n * (n + 1) / 4.0
        tie_term = 0.0
        seen: dict[float, int] = {}
        for d in diffs:
            seen[abs(d)] = seen.get(abs(d), 0) + 1
        tie_term = math.fsum(t**3 - t for t in seen.values()) / 48.0
        sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
        p_greater = _normal_sf((w_plus - 0.5 - mean) / sigma)
        p_less = 1.0 - _normal_sf((w_plus + 0.5 - mean) / sigma)
        method = "wilcoxon_normal"

    if alternative == "greater":
        p = p_greater
    elif alternative == "less":
        p = p_less
    else:
        p = min(1.0, 2.0 * min(p_greater, p_less))
    return TestResult(
        statistic=w_plus, p_value=min(1.0, max(0.0, p)), method=method,
        alternative=alternative,
    )


def _exact_sign_tail(ranks: Sequence[float], w_plus: float) -> tuple[float, float]:
    """Exact tail probabilities of W+ under random sign assignment.

    Ranks are doubled so averaged (half-integer) ranks stay integral,
    then the distribution of the doubled rank sum is built by
    convolution; each of the 2**n assignments contributes one count.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled:
        for w in range(total, r - 1, -1):
            counts[w] += counts[w - r]
    observed = int(round(2 * w_plus))
    universe = float(2 ** len(ranks))
    p_greater = sum(counts[observed:]) / universe
    p_less = sum(counts[: observed + 1]) / universe
    return p_greater, p_less


@dataclass
class SweepRow:
    fraction: float
    mean_net_j: dict[Component, float]
    mean_args_total_bytes: float
    mean_duration_s: float
    count: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    missing_fractions: list[float] = field(default_factory=list)


def data_size_sweep(
    records_by_fraction: Mapping[float, Sequence[MeasurementRecord]],
) -> SweepReport:
    """Mean net energy vs. input-size fraction, one row per k/10 group.

    Missing fractions are reported as gaps; the analysis proceeds on the
    present ones. Flag-excluded records are skipped.
    """
    rows = []
    present = set()
    for fraction in sorted(records_by_fraction):
        records = [r for r in records_by_fraction[fraction] if not r.excluded]
        if not records:
            continue
        present.add(round(fraction * 10))
        aggregate = aggregate_records(records)
        mean_bytes = math.fsum(
            float(r.args_sizes.get("total_bytes", 0)) for r in records
        ) / len(records)
        rows.append(
            SweepRow(
                fraction=fraction,
                mean_net_j=aggregate.mean_net_j,
                mean_args_total_bytes=mean_bytes,
                mean_duration_s=aggregate.mean_duration_s,
                count=len(records),
            )
        )
    missing = [k / 10 for k in range(1, 11) if k not in present]
    return SweepReport(rows=rows, missing_fractions=missing)


def sweep_correlation(
    report: SweepReport, component: Component, against: str = "bytes"
) -> TestResult:
    """Pearson correlation of mean net energy against size or duration."""
    ys = [row.mean_net_j[component] for row in report.rows]
    if against == "bytes":
        xs = [row.mean_args_total_bytes for row in report.rows]
    elif against == "duration":
        xs = [row.mean_duration_s for row in report.rows]
    else:
        raise ValueError(f"unknown axis {against!r}")
    return pearson(xs, ys)


def records_to_csv_rows(
    records_by_fraction: Mapping[float, Sequence[MeasurementRecord]],
) -> list[dict]:
    """Flatten records into plot-friendly CSV rows.

    Columns: method, fraction, cpu_net_j, ram_net_j, gpu_net_j,
    duration_s, args_bytes.
    """
    rows = []
    for fraction in sorted(records_by_fraction):
        for record in records_by_fraction[fraction]:
            if record.excluded:
                continue
            rows.append(
                {
                    "method": record.function_to_run,
                    "fraction": fraction,
                    "cpu_net_j": record.net_j(Component.CPU),
                    "ram_net_j": record.net_j(Component.RAM),
                    "gpu_net_j": record.net_j(Component.GPU),
                    "duration_s": record.execution_time_s,
                    "args_bytes": record.args_sizes.get("total_bytes"),
                }
            )
    return rows
