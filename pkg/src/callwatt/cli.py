"""Command-line orchestration of the measurement protocol.

Subcommands: env-check, calibrate, daemon start|stop|status|serve,
patch, run, analyze rq1|rq2|summary. Exit codes: 0 success, 1 usage,
2 environment, 3 stability timeout, 4 analysis violation.

Configuration comes from one JSON file plus flag overrides (flags win);
each experiment directory gets a manifest with config and trace hashes
so replay runs are reproducible.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__, analysis, harness
from .daemon import Daemon, DaemonClient, DaemonSettings
from .errors import CallwattError, SourceParseError, StartupError
from .instrumenter import (
    DEFAULT_SHIM_MODULE,
    collect_bindings,
    convert_notebook,
    find_call_sites,
    patch_method_level,
    patch_project_level,
    verify_patch,
    write_patch_outputs,
)
from .records import read_records
from .sampler import Component, SamplerConfig, read_log, start_sampling
from .stability import (
    DEFAULT_CALIBRATION_S,
    StabilityConfig,
    StableState,
    calibrate,
    wait_for_stable,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENVIRONMENT = 2
EXIT_STABILITY_TIMEOUT = 3
EXIT_ANALYSIS_VIOLATION = 4

DEFAULT_FRAMEWORK = "tensorflow"
DEFAULT_REPETITIONS = 10

#: Environment variables honored by the runtime breakpoints.
ENV_SOCKET = "CALLWATT_SOCKET"
ENV_EXPERIMENT_FILE = "CALLWATT_EXPERIMENT_FILE"
ENV_FRACTION = "CALLWATT_FRACTION"


@dataclass
class ExperimentConfig:
    """Full experiment configuration (JSON file + flag overrides)."""

    framework: str = DEFAULT_FRAMEWORK
    repetitions: int = DEFAULT_REPETITIONS
    interval_ms: int = 500
    backends: tuple[str, ...] = ()
    backend_options: dict = field(default_factory=dict)
    log_path: Path = Path("out/energy.jsonl")
    stable_state_path: Path = Path("out/stable_state.json")
    output_dir: Path = Path("out/experiment")
    socket_path: Path = Path("out/daemon.sock")
    pace_replay: bool = True
    replay_speed: float = 1.0
    shim_module: str = DEFAULT_SHIM_MODULE
    stability: StabilityConfig = field(default_factory=StabilityConfig)

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for name in ("log_path", "stable_state_path", "output_dir", "socket_path"):
            setattr(self, name, Path(getattr(self, name)))
        self.backends = tuple(self.backends)

    @property
    def replay_mode(self) -> bool:
        return any(b.startswith("replay:") for b in self.backends)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            interval_ms=self.interval_ms,
            backends=self.backends,
            log_path=self.log_path,
            backend_options=self.backend_options,
        )

    def daemon_settings(self) -> DaemonSettings:
        return DaemonSettings(
            socket_path=self.socket_path,
            sampler=self.sampler_config(),
            stability=self.stability,
            stable_state_path=self.stable_state_path,
            pace_replay=self.pace_replay,
            replay_speed=self.replay_speed,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, StabilityConfig):
                value = {
                    "window": value.window,
                    "cpu_max_temp_c": value.cpu_max_temp_c,
                    "gpu_max_temp_c": value.gpu_max_temp_c,
                    "check_interval_ms": value.check_interval_ms,
                    "wait_timeout_s": value.wait_timeout_s,
                    "settle_after_execution_s": value.settle_after_execution_s,
                }
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        data = dict(obj)
        if "stability" in data and isinstance(data["stability"], dict):
            data["stability"] = StabilityConfig(**data["stability"])
        return ExperimentConfig(**data)

    @staticmethod
    def load(path: Path | str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig()
    for name in ("interval_ms", "repetitions", "framework"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "trace", None):
        config.backends = (f"replay:{args.trace}",)
    if getattr(args, "socket", None):
        config.socket_path = Path(args.socket)
    if getattr(args, "out", None):
        config.output_dir = Path(args.out)
    config.__post_init__()
    return config


# -- env-check ----------------------------------------------------------


def _check_item(name: str, status: str, detail: str, hint: str = "") -> dict:
    return {"name": name, "status": status, "detail": detail, "hint": hint}


def run_env_check(config: ExperimentConfig) -> list[dict]:
    """Advisory machine-readiness checklist; modifies nothing."""
    items = []
    if config.replay_mode:
        for name in (
            "gpu-persistence-mode",
            "cpu-governor",
            "background-processes",
            "rapl-channels",
            "gpu-channel",
            "cpu-temp-channel",
        ):
            items.append(_check_item(name, "skip", "skipped (replay)"))
        return items

    try:
        out = subprocess.run(
            ["nvidia-smi", "--query-gpu=persistence_mode", "--format=csv,noheader"],
            capture_output=True, text=True, timeout=5,
        )
        mode = out.stdout.strip().splitlines()[0] if out.returncode == 0 else ""
        if mode == "Enabled":
            items.append(_check_item("gpu-persistence-mode", "pass", mode))
        else:
            items.append(
                _check_item(
                    "gpu-persistence-mode", "warn", mode or "query failed",
                    "enable with: nvidia-smi -pm 1",
                )
            )
    except (OSError, subprocess.SubprocessError):
        items.append(
            _check_item(
                "gpu-persistence-mode", "warn", "nvidia-smi unavailable",
                "install the GPU management utility",
            )
        )

    governor_path = Path("/sys/devices/system/cpu/cpu0/cpufreq/scaling_governor")
    if governor_path.exists():
        governor = governor_path.read_text().strip()
        if governor == "performance":
            items.append(_check_item("cpu-governor", "pass", governor))
        else:
            items.append(
                _check_item(
                    "cpu-governor", "warn", governor,
                    "set with: cpupower frequency-set -g performance",
                )
            )
    else:
        items.append(_check_item("cpu-governor", "warn", "cpufreq not exposed"))

    count = _count_user_processes()
    status = "pass" if count <= 30 else "warn"
    items.append(
        _check_item(
            "background-processes", status, f"{count} user processes",
            "" if status == "pass" else "stop non-essential processes",
        )
    )

    rapl_base = Path(
        config.backend_options.get("rapl", {}).get(
            "base_path", "/sys/class/powercap/intel-rapl"
        )
    )
    if rapl_base.exists():
        items.append(_check_item("rapl-channels", "pass", str(rapl_base)))
    else:
        items.append(
            _check_item(
                "rapl-channels", "warn", f"missing {rapl_base} (cpu_uj, ram_uj)",
            )
        )

    try:
        subprocess.run(
            ["nvidia-smi", "--query-gpu=power.draw", "--format=csv,noheader"],
            capture_output=True, timeout=5, check=True,
        )
        items.append(_check_item("gpu-channel", "pass", "gpu_w readable"))
    except (OSError, subprocess.SubprocessError):
        items.append(_check_item("gpu-channel", "warn", "missing gpu_w channel"))

    thermal = Path(
        config.backend_options.get("cpu-temp", {}).get(
            "thermal_path", "/sys/class/thermal/thermal_zone0/temp"
        )
    )
    if thermal.exists():
        items.append(_check_item("cpu-temp-channel", "pass", str(thermal)))
    else:
        items.append(
            _check_item("cpu-temp-channel", "warn", f"missing {thermal} (cpu_temp_c)")
        )
    return items


def _count_user_processes() -> int:
    uid = os.getuid()
    count = 0
    for entry in Path("/proc").iterdir():
        if not entry.name.isdigit():
            continue
        try:
            if entry.stat().st_uid != uid:
                continue
            if (entry / "cmdline").read_bytes().strip(b"\0"):
                count += 1
        except OSError:
            continue
    return count


def cmd_env_check(args: argparse.Namespace) -> int:
    config = _load_config(args)
    items = run_env_check(config)
    if args.json:
        print(json.dumps(items, indent=2))
    else:
        for item in items:
            line = f"[{item['status']:>4}] {item['name']}: {item['detail']}"
            if item["hint"]:
                line += f"  ({item['hint']})"
            print(line)
    return EXIT_OK


# -- calibrate ------------------------------------------------------------


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    duration = args.duration if args.duration is not None else DEFAULT_CALIBRATION_S
    if config.log_path.exists():
        config.log_path.unlink()
    try:
        handle = start_sampling(config.sampler_config())
    except StartupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    if config.replay_mode:
        handle.join(timeout=300)
    else:
        time.sleep(duration)
        handle.stop()
    if handle.error is not None:
        print(f"error: {handle.error}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    try:
        state = calibrate(
            config.log_path,
            duration,
            config=config.stability,
            interval_ms=config.interval_ms,
            persist_path=config.stable_state_path,
        )
    except CallwattError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    for component, baseline in sorted(
        state.baselines.items(), key=lambda kv: kv[0].value
    ):
        print(
            f"{component.value}: mean {baseline.mean_power_w:.3f} W, "
            f"cv {baseline.cv:.6f}"
        )
    print(f"stable state written to {config.stable_state_path}")
    return EXIT_OK


# -- daemon ----------------------------------------------------------------


def _pidfile(config: ExperimentConfig) -> Path:
    return config.socket_path.with_suffix(".pid")


def cmd_daemon(args: argparse.Namespace) -> int:
    config = _load_config(args)
    action = args.action
    if action == "serve":
        return _daemon_serve(config)
    if action == "start":
        return _daemon_start(config, args)
    if action == "stop":
        return _daemon_stop(config)
    if action == "status":
        client = DaemonClient(config.socket_path)
        if client.ping():
            print(json.dumps(client.config(), indent=2))
            return EXIT_OK
        print("daemon not running")
        return EXIT_ENVIRONMENT
    print(f"unknown daemon action {action}", file=sys.stderr)
    return EXIT_USAGE


def _daemon_serve(config: ExperimentConfig) -> int:
    if not config.stable_state_path.exists():
        print(
            f"error: stable-state file missing at {config.stable_state_path}; "
            "run `callwatt calibrate` first",
            file=sys.stderr,
        )
        return EXIT_ENVIRONMENT
    try:
        daemon = Daemon(config.daemon_settings())
        daemon.start()
    except (CallwattError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    stop = {"flag": False}

    def _terminate(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, _terminate)
    signal.signal(signal.SIGINT, _terminate)
    print(f"daemon serving on {config.socket_path}")
    while not stop["flag"]:
        time.sleep(0.2)
    daemon.stop()
    return EXIT_OK


def _daemon_start(config: ExperimentConfig, args: argparse.Namespace) -> int:
    client = DaemonClient(config.socket_path)
    if client.ping():
        print("daemon already running")
        return EXIT_OK
    log_file = config.socket_path.with_suffix(".daemon.log")
    log_file.parent.mkdir(parents=True, exist_ok=True)
    cmd = [sys.executable, "-m", "callwatt", "daemon", "serve"]
    if args.config:
        cmd += ["--config", str(args.config)]
    with open(log_file, "ab") as fh:
        proc = subprocess.Popen(cmd, stdout=fh, stderr=fh, start_new_session=True)
    _pidfile(config).write_text(str(proc.pid))
    deadline = time.monotonic() + 15
    while time.monotonic() < deadline:
        if client.ping():
            print(f"daemon started (pid {proc.pid})")
            return EXIT_OK
        if proc.poll() is not None:
            break
        time.sleep(0.1)
    print(f"error: daemon failed to start; see {log_file}", file=sys.stderr)
    return EXIT_ENVIRONMENT


def _daemon_stop(config: ExperimentConfig) -> int:
    pidfile = _pidfile(config)
    if not pidfile.exists():
        print("daemon not running (no pidfile)")
        return EXIT_OK
    pid = int(pidfile.read_text().strip())
    try:
        os.kill(pid, signal.SIGTERM)
        for _ in range(50):
            time.sleep(0.1)
            os.kill(pid, 0)
    except ProcessLookupError:
        pass
    pidfile.unlink(missing_ok=True)
    print("daemon stopped")
    return EXIT_OK


# -- patch -----------------------------------------------------------------


def cmd_patch(args: argparse.Namespace) -> int:
    config = _load_config(args)
    framework = args.framework or config.framework
    status = EXIT_OK
    for script in args.scripts:
        script_path = Path(script)
        try:
            raw = script_path.read_text(encoding="utf-8")
            if script_path.suffix == ".ipynb":
                source, dropped = convert_notebook(raw)
                for cell, line in dropped:
                    print(f"{script}: dropped magic line in cell {cell}: {line}")
            else:
                source = raw
            if args.level == "method":
                bindings = collect_bindings(source, framework)
                sites = find_call_sites(source, bindings)
                patched, report = patch_method_level(
                    source, sites, args.experiment_file,
                    shim_module=config.shim_module,
                )
            else:
                patched = patch_project_level(
                    source, args.experiment_file,
                    script_name=script_path.stem,
                    shim_module=config.shim_module,
                )
                report = patched.report
        except SourceParseError as exc:
            print(
                f"error: {script}:{exc.line}:{exc.column}: {exc}", file=sys.stderr
            )
            status = EXIT_ENVIRONMENT
            continue
        verdict = verify_patch(patched)
        if not verdict.valid:
            print(f"error: {script}: patched source does not parse: "
                  f"{verdict.errors}", file=sys.stderr)
            status = EXIT_ENVIRONMENT
            continue
        patched_path, report_path = write_patch_outputs(script_path, patched)
        print(
            f"{script}: {report.patched_count}/{report.eligible_count} call sites "
            f"patched -> {patched_path}"
        )
        for line, reason in report.skipped:
            print(f"{script}:{line}: skipped ({reason})")
    return status


# -- run -------------------------------------------------------------------


def _write_manifest(out_dir: Path, config: ExperimentConfig, extra: dict) -> None:
    manifest = {
        "tool_version": __version__,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
    }
    for descriptor in config.backends:
        if descriptor.startswith("replay:"):
            trace_path = descriptor.split(":", 1)[1]
            digest = hashlib.sha256(Path(trace_path).read_bytes()).hexdigest()[:16]
            manifest["trace_hash"] = digest
    manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.simulate:
        return _run_simulated(config, args)
    return _run_real(config, args)


def _run_simulated(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Deterministic replay-mode run driven by a workload description."""
    workload = harness.Workload.load(args.simulate)
    out_dir = config.output_dir
    fractions = analysis.FRACTIONS if args.sweep else (None,)
    work_dir = out_dir / ".sim"  # replay scratch, skipped by record readers
    _write_manifest(
        out_dir,
        config,
        {
            "mode": "simulate",
            "workload": workload.name,
            "repetitions": config.repetitions,
            "sweep": bool(args.sweep),
        },
    )

    for fraction in fractions:
        scaled = (
            workload if fraction is None else harness.scaled_workload(workload, fraction)
        )
        sim = harness.simulate_workload(
            scaled, work_dir, stability=config.stability
        )
        samples_by_component = {}
        for sample in read_log(sim.log_path):
            samples_by_component.setdefault(sample.component, []).append(sample)
        settings = harness.record_settings(config, sim.stable_state)

        if fraction is None:
            project_dir = out_dir / "project"
            methods_dir = out_dir / "methods"
        else:
            project_dir = out_dir / f"fraction_{round(fraction * 10):02d}" / "project"
            methods_dir = out_dir / f"fraction_{round(fraction * 10):02d}" / "methods"
        for rep in range(1, config.repetitions + 1):
            p0, p1 = scaled.project_window_ms()
            project_record = harness.result_to_record(
                sim.project, samples_by_component, settings, p0, p1
            )
            _append_jsonl(project_dir / f"rep_{rep:02d}.jsonl", project_record)
            for method_spec, result in zip(scaled.methods, sim.methods):
                m0, m1 = method_spec.window_ms(scaled.interval_ms)
                record = harness.result_to_record(
                    result, samples_by_component, settings, m0, m1,
                    args_total_bytes=method_spec.args_total_bytes,
                )
                _append_jsonl(methods_dir / f"rep_{rep:02d}.jsonl", record)
    print(f"simulated experiment written to {out_dir}")
    return EXIT_OK


def _append_jsonl(path: Path, record) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def _run_real(config: ExperimentConfig, args: argparse.Namespace) -> int:
    script = Path(args.script)
    if not script.exists():
        print(f"error: script {script} not found", file=sys.stderr)
        return EXIT_USAGE
    if not config.stable_state_path.exists():
        print("error: stable-state file missing; calibrate first", file=sys.stderr)
        return EXIT_ENVIRONMENT
    baseline = StableState.load(config.stable_state_path)
    out_dir = config.output_dir
    mode_dir = out_dir / ("project" if args.mode == "project" else "methods")
    _write_manifest(
        out_dir, config,
        {"mode": args.mode, "script": str(script), "repetitions": config.repetitions},
    )

    any_timeout = False
    fractions = analysis.FRACTIONS if args.sweep else (None,)
    for fraction in fractions:
        for rep in range(1, config.repetitions + 1):
            report = wait_for_stable(
                config.stability,
                baseline,
                lambda: read_log(config.log_path) if config.log_path.exists() else [],
                components=tuple(baseline.baselines),
            )
            if report.outcome == "timeout":
                print(f"rep {rep}: stability timeout, run skipped")
                any_timeout = True
                continue
            if fraction is None:
                rep_file = mode_dir / f"rep_{rep:02d}.jsonl"
            else:
                rep_file = (
                    out_dir / f"fraction_{round(fraction * 10):02d}"
                    / f"rep_{rep:02d}.jsonl"
                )
            rep_file.parent.mkdir(parents=True, exist_ok=True)
            env = dict(os.environ)
            env[ENV_SOCKET] = str(config.socket_path)
            env[ENV_EXPERIMENT_FILE] = str(rep_file)
            if fraction is not None:
                env[ENV_FRACTION] = str(fraction)
            proc = subprocess.run(
                [sys.executable, str(script)], env=env,
                capture_output=True, text=True,
            )
            if proc.returncode != 0:
                (rep_file.parent / (rep_file.stem + ".failed")).write_text(
                    proc.stderr[-4000:]
                )
                print(f"rep {rep}: script failed (exit {proc.returncode}); flagged")
            if config.stability.settle_after_execution_s and not config.replay_mode:
                time.sleep(config.stability.settle_after_execution_s)
    print(f"experiment records in {out_dir}")
    return EXIT_STABILITY_TIMEOUT if any_timeout else EXIT_OK


# -- analyze -----------------------------------------------------------------


def _load_experiment_records(directory: Path) -> tuple[list, list]:
    project_records = []
    method_records = []
    for path in sorted((directory / "project").glob("*.jsonl")):
        project_records.extend(read_records(path))
    for path in sorted((directory / "methods").glob("*.jsonl")):
        method_records.extend(read_records(path))
    return project_records, method_records


def analyze_rq1(directories: list[Path]) -> dict:
    """Eq.-1 comparison per experiment plus the paired signed-rank test."""
    reports = []
    pairs_by_component: dict[Component, list[tuple[float, float]]] = {}
    for directory in directories:
        project_records, method_records = _load_experiment_records(directory)
        usable_projects = [r for r in project_records if not r.excluded]
        if not usable_projects or not method_records:
            reports.append({"dir": str(directory), "error": "missing records"})
            continue
        project = analysis.aggregate_records(usable_projects)
        methods = [
            analysis.aggregate_records(group)
            for group in _group_by_function(method_records).values()
        ]
        eq1 = analysis.compare_project_vs_methods(project, methods)
        for component in eq1.e_project:
            pairs_by_component.setdefault(component, []).append(
                (eq1.e_project[component], eq1.e_methods[component])
            )
        reports.append(
            {
                "dir": str(directory),
                "e_project": {c.value: v for c, v in eq1.e_project.items()},
                "e_methods": {c.value: v for c, v in eq1.e_methods.items()},
                "e_out_of_scope": {c.value: v for c, v in eq1.e_out_of_scope.items()},
                "out_of_scope_share": {
                    c.value: v for c, v in eq1.out_of_scope_share.items()
                },
                "verdict": {c.value: v for c, v in eq1.verdict.items()},
                "passed": eq1.passed,
            }
        )

    tests = {}
    for component, pairs in sorted(pairs_by_component.items(), key=lambda kv: kv[0].value):
        projects = [p for p, _ in pairs]
        methods_sum = [m for _, m in pairs]
        try:
            result = analysis.wilcoxon_signed_rank(projects, methods_sum, "greater")
            tests[component.value] = {
                "statistic": result.statistic,
                "p_value": result.p_value,
                "method": result.method,
                "alternative": result.alternative,
            }
        except (CallwattError, ValueError) as exc:
            tests[component.value] = {"error": str(exc)}
    return {"experiments": reports, "wilcoxon_project_greater": tests}


def _group_by_function(records):
    from .records import group_by_function

    return group_by_function([r for r in records if not r.excluded])


def analyze_rq2(directory: Path) -> tuple[dict, list[dict]]:
    """Per-method input-size sweep plus energy/size correlations."""
    from .records import group_by_function, read_records_dir

    by_method: dict[str, dict[float, list]] = {}
    all_by_fraction: dict[float, list] = {}
    for sub in sorted(directory.glob("fraction_*")):
        fraction = int(sub.name.split("_")[1]) / 10
        method_dir = sub / "methods"
        records = read_records_dir(method_dir if method_dir.exists() else sub)
        all_by_fraction[fraction] = records
        for name, group in group_by_function(records).items():
            by_method.setdefault(name, {})[fraction] = group

    methods_summary = {}
    for name, records_by_fraction in sorted(by_method.items()):
        sweep = analysis.data_size_sweep(records_by_fraction)
        correlations = {}
        for component in Component:
            if not sweep.rows or component not in sweep.rows[0].mean_net_j:
                continue
            entry = {}
            for axis in ("bytes", "duration"):
                try:
                    result = analysis.sweep_correlation(sweep, component, axis)
                    entry[axis] = {"rho": result.statistic, "p_value": result.p_value}
                except (CallwattError, ValueError) as exc:
                    entry[axis] = {"error": str(exc)}
            correlations[component.value] = entry
        methods_summary[name] = {
            "rows": [
                {
                    "fraction": row.fraction,
                    "mean_net_j": {c.value: v for c, v in row.mean_net_j.items()},
                    "mean_args_total_bytes": row.mean_args_total_bytes,
                    "mean_duration_s": row.mean_duration_s,
                    "count": row.count,
                }
                for row in sweep.rows
            ],
            "missing_fractions": sweep.missing_fractions,
            "correlations": correlations,
        }
    csv_rows = analysis.records_to_csv_rows(all_by_fraction)
    return {"methods": methods_summary}, csv_rows


def cmd_analyze(args: argparse.Namespace) -> int:
    directories = [Path(d) for d in args.dirs]
    out_path = Path(args.report) if args.report else None
    if args.question == "rq1":
        report = analyze_rq1(directories)
        payload = json.dumps(report, indent=2, sort_keys=True)
        print(payload)
        if out_path:
            out_path.write_text(payload + "\n")
        failed = any(
            not experiment.get("passed", False)
            for experiment in report["experiments"]
        )
        return EXIT_ANALYSIS_VIOLATION if failed else EXIT_OK
    if args.question == "rq2":
        summary, csv_rows = analyze_rq2(directories[0])
        payload = json.dumps(summary, indent=2, sort_keys=True)
        print(payload)
        if out_path:
            out_path.write_text(payload + "\n")
        csv_path = (
            Path(args.csv) if args.csv else directories[0] / "rq2_table.csv"
        )
        _write_csv(csv_path, csv_rows)
        print(f"csv table -> {csv_path}", file=sys.stderr)
        return EXIT_OK
    # summary
    from .records import group_by_function, read_records_dir

    records = []
    for directory in directories:
        records.extend(read_records_dir(directory))
    summary = {}
    for name, group in sorted(group_by_function(records).items()):
        usable = [r for r in group if not r.excluded]
        if not usable:
            summary[name] = {"count": 0, "excluded": len(group)}
            continue
        aggregate = analysis.aggregate_records(usable)
        summary[name] = {
            "count": aggregate.count,
            "excluded": len(group) - len(usable),
            "mean_net_j": {c.value: v for c, v in aggregate.mean_net_j.items()},
            "std_net_j": {c.value: v for c, v in aggregate.std_net_j.items()},
            "mean_duration_s": aggregate.mean_duration_s,
        }
    payload = json.dumps(summary, indent=2, sort_keys=True)
    print(payload)
    if out_path:
        out_path.write_text(payload + "\n")
    return EXIT_OK


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [
        "method", "fraction", "cpu_net_j", "ram_net_j", "gpu_net_j",
        "duration_s", "args_bytes",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="callwatt",
        description="Per-call energy profiler: instrument, sample, analyze.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("env-check", help="advisory machine readiness checklist")
    p.add_argument("--config")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_env_check)

    p = sub.add_parser("calibrate", help="record the no-load stable state")
    p.add_argument("--config")
    p.add_argument("--duration", type=float, default=None,
                   help=f"seconds (default {DEFAULT_CALIBRATION_S:.0f})")
    p.add_argument("--trace", help="replay trace instead of hardware backends")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("daemon", help="sampling daemon lifecycle")
    p.add_argument("action", choices=["start", "stop", "status", "serve"])
    p.add_argument("--config")
    p.set_defaults(func=cmd_daemon)

    p = sub.add_parser("patch", help="instrument scripts with breakpoints")
    p.add_argument("--config")
    p.add_argument("--level", choices=["method", "project"], required=True)
    p.add_argument("--framework", default=None)
    p.add_argument("--experiment-file", required=True)
    p.add_argument("scripts", nargs="+")
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("run", help="execute a patched script repeatedly")
    p.add_argument("--config")
    p.add_argument("--script")
    p.add_argument("--mode", choices=["method", "project"], default="method")
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--sweep", action="store_true",
                   help="run the k/10 input-size sweep")
    p.add_argument("--simulate", default=None,
                   help="workload JSON: deterministic replay-mode run")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="aggregate and test measurement records")
    p.add_argument("question", choices=["rq1", "rq2", "summary"])
    p.add_argument("--dir", dest="dirs", action="append", required=True)
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; remap to the documented code
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CallwattError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT


if __name__ == "__main__":
    sys.exit(main())
