"""Static instrumentation of framework API calls.

Locates every call that resolves to the configured framework, through
import bindings (module and symbol imports, aliases), through objects
assigned from framework calls in the same block, or through instances
of user classes whose base class resolves to the framework. Around each
patchable call the method-level patcher inserts a before/after
breakpoint pair; the project-level patcher wraps the whole script with
one pair.

The original statements are preserved verbatim: patching splices whole
lines into the source, never rewrites expressions. Calls that cannot be
bracketed that way (nested inside another call, sharing a physical line
with another statement, inside a one-line suite, or not a statement's
value) are skipped with a recorded reason, never silently.

Known limitation: a call made through an object returned by a
user-defined function is not resolvable and will not be found.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .pysource import (
    MODULE_SCOPE,
    CallFact,
    Scope,
    SourceFacts,
    parse_source,
    parses,
)

BEFORE_NAME = "before_execution_INSERTED_INTO_SCRIPT"
AFTER_NAME = "after_execution_INSERTED_INTO_SCRIPT"
START_TIMES_NAME = "start_times_INSERTED_INTO_SCRIPT"
EXPERIMENT_PATH_NAME = "EXPERIMENT_FILE_PATH"
DEFAULT_SHIM_MODULE = "callwatt_shim"

SKIP_NESTED = "nested-call"
SKIP_SHARED_LINE = "shared-line"
SKIP_INLINE_SUITE = "inline-suite"
SKIP_CONTEXT = "unsupported-context"


@dataclass(frozen=True)
class ImportBinding:
    """A local name bound to a framework module or symbol."""

    module_path: str
    local_alias: str
    kind: str  # "module" | "symbol"


@dataclass(frozen=True)
class TrackedObject:
    """A name known to hold a framework object."""

    name: str
    origin: str  # "constructor" | "subclass"
    qualified_origin: str
    line: int


@dataclass
class CallSite:
    """A located framework API call."""

    line: int
    column: int
    end_line: int
    qualified_name: str
    function_to_run: str
    receiver: str | None
    arg_texts: tuple[str, ...]
    kwarg_texts: tuple[tuple[str | None, str], ...]
    assignment_target: str | None
    patchable: bool
    skip_reason: str | None = None
    # filled from the enclosing statement when patchable
    stmt_line: int = 0
    stmt_end_line: int = 0
    indent: str = ""


@dataclass
class PatchReport:
    eligible_count: int = 0
    patched_count: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def completeness(self) -> float:
        if self.eligible_count == 0:
            return 1.0
        return self.patched_count / self.eligible_count

    def to_dict(self) -> dict:
        return {
            "eligible": self.eligible_count,
            "patched": self.patched_count,
            "skipped": [{"line": line, "reason": reason} for line, reason in self.skipped],
        }


@dataclass
class PatchedScript:
    source: str
    level: str  # "method" | "project"
    report: PatchReport
    function_to_run_pairs: list[str] = field(default_factory=list)


# -- binding and call resolution ---------------------------------------


class _Resolver:
    """Replays the script's definitions in order, resolving each call."""

    def __init__(self, framework: str | None, seed_imports: list[ImportBinding] | None):
        self.framework = framework
        self._bindings: dict[Scope, dict[str, ImportBinding]] = {}
        self._classes: dict[Scope, dict[str, str]] = {}
        self._tracked: dict[Scope, dict[str, TrackedObject]] = {}
        self.import_bindings: list[ImportBinding] = []
        self.tracked_objects: list[TrackedObject] = []
        if seed_imports:
            for binding in seed_imports:
                self._bindings.setdefault(MODULE_SCOPE, {})[binding.local_alias] = binding

    def _lookup(self, table: dict[Scope, dict], scope: Scope, name: str):
        for depth in range(len(scope), 0, -1):
            entry = table.get(scope[:depth], {}).get(name)
            if entry is not None:
                return entry
        return None

    def _matches_framework(self, path: str) -> bool:
        if self.framework is None:
            return False
        return path == self.framework or path.startswith(self.framework + ".")

    def add_import(self, scope: Scope, kind: str, full_path: str, bound: str) -> None:
        if not self._matches_framework(full_path):
            return
        binding = ImportBinding(module_path=full_path, local_alias=bound, kind=kind)
        self._bindings.setdefault(scope, {})[bound] = binding
        self.import_bindings.append(binding)

    def add_class(
        self,
        scope: Scope,
        line: int,
        name: str,
        base_chains: tuple[tuple[str | None, tuple[str, ...]], ...],
    ) -> None:
        for root, parts in base_chains:
            if root is None or "()" in parts:
                continue
            base = self._lookup(self._bindings, scope, root)
            if base is not None:
                qualified = _join(base.module_path, parts)
                self._classes.setdefault(scope, {})[name] = qualified
                return
            parent = self._lookup(self._classes, scope, root)
            if parent is not None and not parts:
                self._classes.setdefault(scope, {})[name] = parent
                return

    def add_assignment(
        self,
        scope: Scope,
        line: int,
        targets: tuple[str, ...],
        value_resolution: "_Resolution | None",
    ) -> None:
        for target in targets:
            if value_resolution is not None:
                tracked = TrackedObject(
                    name=target,
                    origin=value_resolution.tracking_origin_kind,
                    qualified_origin=value_resolution.tracking_origin,
                    line=line,
                )
                self._tracked.setdefault(scope, {})[target] = tracked
                self.tracked_objects.append(tracked)
            else:
                # rebinding a name to something non-framework untracks it
                self._tracked.get(scope, {}).pop(target, None)

    def resolve_call(self, call: CallFact) -> "_Resolution | None":
        root = call.chain_root
        if root is None:
            return None
        parts = call.chain_parts

        tracked = self._lookup(self._tracked, call.scope, root)
        if tracked is not None:
            if parts:
                qualified = _join(tracked.qualified_origin, parts)
                receiver = call.receiver_text
            else:
                qualified = tracked.qualified_origin + ".__call__"
                receiver = root
            return _Resolution(qualified, receiver, qualified, "constructor")

        klass = self._lookup(self._classes, call.scope, root)
        if klass is not None:
            qualified = _join(root, parts)
            # instances of the subclass are tracked under the framework base
            origin = klass if not parts else qualified
            return _Resolution(qualified, None, origin, "subclass")

        binding = self._lookup(self._bindings, call.scope, root)
        if binding is not None:
            qualified = _join(binding.module_path, parts)
            return _Resolution(qualified, None, qualified, "constructor")
        return None


@dataclass(frozen=True)
class _Resolution:
    qualified: str
    receiver: str | None
    tracking_origin: str
    tracking_origin_kind: str


def _join(base: str, parts: tuple[str, ...]) -> str:
    out = base
    for part in parts:
        out += part if part == "()" else "." + part
    return out


def _run_engine(
    facts: SourceFacts,
    framework: str | None,
    seed_imports: list[ImportBinding] | None = None,
) -> tuple[_Resolver, list[CallSite]]:
    resolver = _Resolver(framework, seed_imports)

    events: list[tuple[int, int, int, str, object]] = []
    for imp in facts.imports:
        events.append((imp.line, 0, 0, "import", imp))
    for cls in facts.classes:
        events.append((cls.line, 0, 1, "class", cls))
    for call in facts.calls:
        events.append((call.line, call.col, 2, "call", call))
    for scope, line, targets, value_call_id in facts.assigns:
        events.append((line, 1 << 30, 3, "assign", (scope, line, targets, value_call_id)))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    sites: list[CallSite] = []
    resolutions: dict[int, _Resolution] = {}
    breakpoint_ids: set[int] = set()

    for _, _, _, kind, payload in events:
        if kind == "import":
            imp = payload
            resolver.add_import(imp.scope, imp.kind, imp.full_path, imp.bound_name)
        elif kind == "class":
            cls = payload
            resolver.add_class(cls.scope, cls.line, cls.name, cls.base_chains)
        elif kind == "call":
            call = payload
            # never re-instrument our own inserts: argument expressions
            # forwarded to a breakpoint call are not new sites
            if call.chain_root in (BEFORE_NAME, AFTER_NAME):
                breakpoint_ids.add(call.call_id)
                continue
            if any(parent in breakpoint_ids for parent in call.parent_call_ids):
                continue
            resolution = resolver.resolve_call(call)
            if resolution is None:
                continue
            resolutions[call.call_id] = resolution
            sites.append(_build_site(call, resolution))
        elif kind == "assign":
            scope, line, targets, value_call_id = payload
            resolution = (
                resolutions.get(value_call_id) if value_call_id is not None else None
            )
            resolver.add_assignment(scope, line, targets, resolution)
    return resolver, sites


def _build_site(call: CallFact, resolution: _Resolution) -> CallSite:
    patchable = False
    skip_reason: str | None = None
    stmt = call.stmt
    if call.parent_call_ids:
        skip_reason = SKIP_NESTED
    elif stmt is None or not call.is_stmt_value:
        skip_reason = SKIP_CONTEXT
    elif not stmt.starts_line:
        skip_reason = SKIP_INLINE_SUITE
    elif stmt.shares_line:
        skip_reason = SKIP_SHARED_LINE
    else:
        patchable = True

    return CallSite(
        line=call.line,
        column=call.col,
        end_line=call.end_line,
        qualified_name=resolution.qualified,
        function_to_run=resolution.qualified + "()",
        receiver=resolution.receiver,
        arg_texts=call.arg_texts,
        kwarg_texts=call.kwarg_texts,
        assignment_target=stmt.target_text if stmt is not None else None,
        patchable=patchable,
        skip_reason=skip_reason,
        stmt_line=stmt.line if stmt is not None else call.line,
        stmt_end_line=stmt.end_line if stmt is not None else call.end_line,
        indent=stmt.indent if stmt is not None else "",
    )


# -- public operations -------------------------------------------------


def collect_bindings(
    source: str, framework: str
) -> tuple[list[ImportBinding], list[TrackedObject]]:
    """Framework import bindings and tracked objects of a script."""
    facts = parse_source(source)
    resolver, _ = _run_engine(facts, framework)
    return resolver.import_bindings, resolver.tracked_objects


def find_call_sites(
    source: str,
    bindings: tuple[list[ImportBinding], list[TrackedObject]] | list[ImportBinding],
) -> list[CallSite]:
    """Every call resolvable through the given bindings or objects
    tracked from them, in source order.

    Tracked objects are replayed from the source itself (resolution is
    order-sensitive); the import bindings seed name resolution.
    """
    if isinstance(bindings, tuple):
        import_bindings = bindings[0]
    else:
        import_bindings = bindings
    facts = parse_source(source)
    _, sites = _run_engine(facts, None, seed_imports=list(import_bindings))
    return sites


def find_sites(source: str, framework: str) -> list[CallSite]:
    """One-step convenience: collect bindings, then find call sites."""
    facts = parse_source(source)
    _, sites = _run_engine(facts, framework)
    return sites


def _before_line(indent: str, function_to_run: str) -> str:
    return (
        f"{indent}{START_TIMES_NAME} = {BEFORE_NAME}("
        f"experiment_file_path={EXPERIMENT_PATH_NAME}, "
        f"function_to_run={function_to_run!r})"
    )


def _after_line(site_indent: str, function_to_run: str, method_object: str | None,
                args: tuple[str, ...], kwargs: tuple[tuple[str | None, str], ...]) -> str:
    arg_list = ", ".join(args)
    kwarg_items = ", ".join(
        f"**{text}" if name is None else f"{name!r}: {text}"
        for name, text in kwargs
    )
    return (
        f"{site_indent}{AFTER_NAME}("
        f"start_times={START_TIMES_NAME}, "
        f"experiment_file_path={EXPERIMENT_PATH_NAME}, "
        f"function_to_run={function_to_run!r}, "
        f"method_object={method_object if method_object is not None else 'None'}, "
        f"function_args=[{arg_list}], "
        f"function_kwargs={{{kwarg_items}}})"
    )


def _header_lines(experiment_path: str | Path, shim_module: str) -> list[str]:
    return [
        f"from {shim_module} import {BEFORE_NAME}, {AFTER_NAME}",
        f"{EXPERIMENT_PATH_NAME} = {str(experiment_path)!r}",
    ]


def patch_method_level(
    source: str,
    sites: list[CallSite],
    experiment_path: str | Path,
    *,
    shim_module: str = DEFAULT_SHIM_MODULE,
) -> tuple[PatchedScript, PatchReport]:
    """Insert a before/after breakpoint pair around each patchable site.

    The original call statement, including any assignment of its
    result, stays verbatim between the two inserts. With zero sites the
    output is byte-identical to the input (no header either).
    """
    report = PatchReport(eligible_count=len(sites))
    lines = source.splitlines(keepends=True)
    before_at: dict[int, list[str]] = {}
    after_at: dict[int, list[str]] = {}
    pairs: list[str] = []

    for site in sites:
        if not site.patchable:
            report.skipped.append((site.line, site.skip_reason or SKIP_CONTEXT))
            continue
        before_at.setdefault(site.stmt_line, []).append(
            _before_line(site.indent, site.function_to_run)
        )
        after_at.setdefault(site.stmt_end_line, []).append(
            _after_line(
                site.indent,
                site.function_to_run,
                site.receiver,
                site.arg_texts,
                site.kwarg_texts,
            )
        )
        pairs.append(site.function_to_run)
        report.patched_count += 1

    if report.patched_count == 0:
        patched = PatchedScript(source=source, level="method", report=report)
        return patched, report

    facts = parse_source(source)
    out: list[str] = []
    for index, line in enumerate(lines, start=1):
        for text in before_at.get(index, []):
            out.append(text + "\n")
        out.append(line)
        if index == facts.header_insert_line:
            out.extend(h + "\n" for h in _header_lines(experiment_path, shim_module))
        for text in after_at.get(index, []):
            out.append(text + "\n")
    if facts.header_insert_line == 0:
        out = [h + "\n" for h in _header_lines(experiment_path, shim_module)] + out

    patched = PatchedScript(
        source="".join(out), level="method", report=report,
        function_to_run_pairs=pairs,
    )
    return patched, report


def patch_project_level(
    source: str,
    experiment_path: str | Path,
    *,
    script_name: str = "project",
    shim_module: str = DEFAULT_SHIM_MODULE,
) -> PatchedScript:
    """Wrap the whole script in a single before/after breakpoint pair.

    The before-breakpoint runs before any original statement and the
    after-breakpoint sits at the textual end; an early exit guard in the
    script would bypass it, which is recorded in the report.
    """
    report = PatchReport(eligible_count=1, patched_count=1)
    facts = parse_source(source)
    lines = source.splitlines(keepends=True)
    if lines and not lines[-1].endswith("\n"):
        lines[-1] += "\n"

    header = _header_lines(experiment_path, shim_module)
    before = _before_line("", script_name)
    after = _after_line("", script_name, None, (), ())

    out: list[str] = []
    if facts.header_insert_line == 0:
        out.extend(h + "\n" for h in header)
        out.append(before + "\n")
        out.extend(lines)
    else:
        for index, line in enumerate(lines, start=1):
            out.append(line)
            if index == facts.header_insert_line:
                out.extend(h + "\n" for h in header)
                out.append(before + "\n")
    out.append(after + "\n")

    for line_no, reason in _early_exit_guards(source):
        report.skipped.append((line_no, reason))

    return PatchedScript(
        source="".join(out), level="project", report=report,
        function_to_run_pairs=[script_name],
    )


def _early_exit_guards(source: str) -> list[tuple[int, str]]:
    """Lines that can leave the script before the textual end."""
    import ast as _ast

    guards = []
    tree = _ast.parse(source)
    for node in _ast.walk(tree):
        if isinstance(node, _ast.Call):
            root_text = ""
            func = node.func
            if isinstance(func, _ast.Name):
                root_text = func.id
            elif isinstance(func, _ast.Attribute) and isinstance(func.value, _ast.Name):
                root_text = f"{func.value.id}.{func.attr}"
            if root_text in ("exit", "quit", "sys.exit", "os._exit"):
                guards.append((node.lineno, "early-exit-guard"))
        elif isinstance(node, _ast.Raise):
            exc = node.exc
            name = None
            if isinstance(exc, _ast.Call) and isinstance(exc.func, _ast.Name):
                name = exc.func.id
            elif isinstance(exc, _ast.Name):
                name = exc.id
            if name == "SystemExit":
                guards.append((node.lineno, "early-exit-guard"))
    return guards


@dataclass
class PatchVerdict:
    valid: bool
    errors: list[tuple[int, str]] = field(default_factory=list)


def verify_patch(patched: PatchedScript | str) -> PatchVerdict:
    """Re-parse the patched source; invalid inserts surface as locations."""
    source = patched.source if isinstance(patched, PatchedScript) else patched
    ok, errors = parses(source)
    return PatchVerdict(valid=ok, errors=errors)


@dataclass
class BehaviorDiff:
    match: bool
    original: tuple[int, str]
    patched: tuple[int, str]


def verify_behavior(
    original_path: Path | str,
    patched_path: Path | str,
    *,
    python: str = sys.executable,
    env: dict | None = None,
    timeout: float = 60.0,
) -> BehaviorDiff:
    """Run both scripts and compare exit code and stdout.

    The caller provides an environment where the breakpoint module
    resolves to a no-op stub, so observable behavior must be identical.
    """

    def run(path: Path | str) -> tuple[int, str]:
        proc = subprocess.run(
            [python, str(path)], capture_output=True, text=True,
            env=env, timeout=timeout,
        )
        return proc.returncode, proc.stdout

    original = run(original_path)
    patched = run(patched_path)
    return BehaviorDiff(
        match=original == patched, original=original, patched=patched
    )


def convert_notebook(notebook_json: str) -> tuple[str, list[tuple[int, str]]]:
    """Flatten a notebook's code cells into a plain script.

    Cell-magic and shell-escape lines are dropped; each drop is reported
    as (cell index, dropped line).
    """
    nb = json.loads(notebook_json)
    dropped: list[tuple[int, str]] = []
    chunks: list[str] = []
    for index, cell in enumerate(nb.get("cells", [])):
        if cell.get("cell_type") != "code":
            continue
        source = cell.get("source", [])
        if isinstance(source, str):
            source = source.splitlines(keepends=True)
        kept: list[str] = []
        for line in source:
            if line.lstrip().startswith(("%", "!")):
                dropped.append((index, line.rstrip("\n")))
            else:
                kept.append(line if line.endswith("\n") else line + "\n")
        if kept:
            chunks.append("".join(kept))
    return "\n".join(chunks), dropped


def write_patch_outputs(
    script_path: Path | str, patched: PatchedScript
) -> tuple[Path, Path]:
    """Write `<script>.<level>.patched` plus its JSON report next to it."""
    script_path = Path(script_path)
    patched_path = script_path.with_name(
        f"{script_path.name}.{patched.level}.patched"
    )
    report_path = patched_path.with_name(patched_path.name + ".report.json")
    patched_path.write_text(patched.source, encoding="utf-8")
    report_path.write_text(
        json.dumps(patched.report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return patched_path, report_path
