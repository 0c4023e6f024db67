"""Python grammar adapter for the instrumenter.

Parses a script and extracts language-neutral facts: import bindings,
class definitions with their base chains, assignments, and call
expressions with source spans. The instrumentation engine works only on
these facts, so the grammar-specific logic stays in one place.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from .errors import SourceParseError

Scope = tuple[str, ...]

MODULE_SCOPE: Scope = ("<module>",)


@dataclass
class ImportFact:
    scope: Scope
    line: int
    kind: str  # "module" | "symbol"
    full_path: str  # dotted path the bound name refers to
    bound_name: str


@dataclass
class ClassFact:
    scope: Scope
    line: int
    name: str
    base_chains: tuple[tuple[str | None, tuple[str, ...]], ...]


@dataclass
class StatementFact:
    """One simple statement that could host before/after inserts."""

    line: int
    end_line: int
    indent: str
    starts_line: bool  # nothing but whitespace precedes it on its first line
    kind: str  # "expr" | "assign" | "ann" | "aug" | "other"
    target_text: str | None = None
    target_names: tuple[str, ...] = ()
    shares_line: bool = False


@dataclass
class CallFact:
    call_id: int
    scope: Scope
    line: int
    col: int
    end_line: int
    chain_root: str | None
    chain_parts: tuple[str, ...]  # attribute segments; "()" marks a call boundary
    through_call: bool
    receiver_text: str | None  # source of the object expression for method calls
    arg_texts: tuple[str, ...]
    kwarg_texts: tuple[tuple[str | None, str], ...]
    stmt: StatementFact | None
    is_stmt_value: bool
    parent_call_ids: tuple[int, ...]


@dataclass
class SourceFacts:
    source: str
    imports: list[ImportFact] = field(default_factory=list)
    classes: list[ClassFact] = field(default_factory=list)
    calls: list[CallFact] = field(default_factory=list)
    statements: list[StatementFact] = field(default_factory=list)
    #: assignments in source order: (scope, line, target names, value call id or None)
    assigns: list[tuple[Scope, int, tuple[str, ...], int | None]] = field(
        default_factory=list
    )
    header_insert_line: int = 0  # 1-based line AFTER which a header belongs


def parse_source(source: str) -> SourceFacts:
    """Extract facts; raises SourceParseError on syntax errors."""
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise SourceParseError(
            f"script does not parse: {exc.msg}", line=exc.lineno, column=exc.offset
        ) from exc
    collector = _Collector(source)
    collector.walk_module(tree)
    facts = collector.facts
    facts.header_insert_line = _header_insert_line(tree)
    _mark_shared_lines(facts.statements)
    return facts


def parses(source: str) -> tuple[bool, list[tuple[int, str]]]:
    """Parse check used by patch verification: (ok, error locations)."""
    try:
        ast.parse(source)
        return True, []
    except SyntaxError as exc:
        return False, [(exc.lineno or 0, exc.msg or "syntax error")]


def _header_insert_line(tree: ast.Module) -> int:
    line = 0
    body = list(tree.body)
    if body and isinstance(body[0], ast.Expr) and isinstance(
        body[0].value, ast.Constant
    ) and isinstance(body[0].value.value, str):
        line = body[0].end_lineno or body[0].lineno
        body = body[1:]
    for stmt in body:
        if isinstance(stmt, ast.ImportFrom) and stmt.module == "__future__":
            line = stmt.end_lineno or stmt.lineno
        else:
            break
    return line


def _mark_shared_lines(statements: list[StatementFact]) -> None:
    owners: dict[int, list[StatementFact]] = {}
    for stmt in statements:
        for line in range(stmt.line, stmt.end_line + 1):
            owners.setdefault(line, []).append(stmt)
    for stmts in owners.values():
        if len(stmts) > 1:
            for stmt in stmts:
                stmt.shares_line = True


def _chain(node: ast.expr) -> tuple[str | None, tuple[str, ...], bool]:
    """Leftmost name and attribute segments of a callee expression.

    A call in the middle of the chain becomes a "()" segment, e.g.
    ``pkg.Klass().method`` -> ("pkg", ("Klass", "()", "method"), True).
    """
    parts: list[str] = []
    through = False
    while True:
        if isinstance(node, ast.Attribute):
            parts.append(node.attr)
            node = node.value
        elif isinstance(node, ast.Call):
            parts.append("()")
            through = True
            node = node.func
        elif isinstance(node, ast.Name):
            return node.id, tuple(reversed(parts)), through
        else:
            return None, tuple(reversed(parts)), through


_SIMPLE_KINDS = {
    ast.Expr: "expr",
    ast.Assign: "assign",
    ast.AnnAssign: "ann",
    ast.AugAssign: "aug",
}


class _Collector:
    def __init__(self, source: str):
        self.facts = SourceFacts(source=source)
        self.source = source
        self.lines = source.splitlines()
        self.scope: Scope = MODULE_SCOPE
        self._call_stack: list[int] = []
        self._next_call_id = 0

    # -- statements ---------------------------------------------------

    def walk_module(self, tree: ast.Module) -> None:
        self._walk_body(tree.body)

    def _walk_body(self, body: list[ast.stmt]) -> None:
        for stmt in body:
            self._walk_stmt(stmt)

    def _walk_stmt(self, node: ast.stmt) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            for decorator in node.decorator_list:
                self._walk_expr(decorator, None, False)
            for default in list(node.args.defaults) + [
                d for d in node.args.kw_defaults if d is not None
            ]:
                self._walk_expr(default, None, False)
            self._in_scope(node.name, node.body)
        elif isinstance(node, ast.ClassDef):
            chains = tuple(_chain(base)[:2] for base in node.bases)
            self.facts.classes.append(
                ClassFact(
                    scope=self.scope, line=node.lineno, name=node.name,
                    base_chains=chains,
                )
            )
            for decorator in node.decorator_list:
                self._walk_expr(decorator, None, False)
            self._in_scope(node.name, node.body)
        elif isinstance(node, ast.Import):
            for alias in node.names:
                if alias.asname:
                    path, bound = alias.name, alias.asname
                else:
                    # `import a.b` binds only the root name `a`
                    path = bound = alias.name.split(".")[0]
                self.facts.imports.append(
                    ImportFact(self.scope, node.lineno, "module", path, bound)
                )
            self._record_plain_span(node)
        elif isinstance(node, ast.ImportFrom):
            if node.module and node.level == 0:
                for alias in node.names:
                    if alias.name == "*":
                        continue
                    self.facts.imports.append(
                        ImportFact(
                            self.scope,
                            node.lineno,
                            "symbol",
                            f"{node.module}.{alias.name}",
                            alias.asname or alias.name,
                        )
                    )
            self._record_plain_span(node)
        elif type(node) in _SIMPLE_KINDS:
            self._walk_simple(node)
        elif isinstance(node, (ast.If, ast.While)):
            self._record_plain_span_header(node)
            self._walk_expr(node.test, None, False)
            self._walk_body(node.body)
            self._walk_body(node.orelse)
        elif isinstance(node, (ast.For, ast.AsyncFor)):
            self._walk_expr(node.iter, None, False)
            self._walk_body(node.body)
            self._walk_body(node.orelse)
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            for item in node.items:
                self._walk_expr(item.context_expr, None, False)
            self._walk_body(node.body)
        elif isinstance(node, ast.Try):
            self._walk_body(node.body)
            for handler in node.handlers:
                self._walk_body(handler.body)
            self._walk_body(node.orelse)
            self._walk_body(node.finalbody)
        elif hasattr(ast, "Match") and isinstance(node, ast.Match):
            self._walk_expr(node.subject, None, False)
            for case in node.cases:
                self._walk_body(case.body)
        else:
            # remaining simple statements: Return, Raise, Assert, Delete, ...
            self._record_plain_span(node)
            for child in ast.iter_child_nodes(node):
                if isinstance(child, ast.expr):
                    self._walk_expr(child, None, False)

    def _in_scope(self, name: str, body: list[ast.stmt]) -> None:
        outer = self.scope
        self.scope = outer + (name,)
        self._walk_body(body)
        self.scope = outer

    def _walk_simple(self, node: ast.stmt) -> None:
        kind = _SIMPLE_KINDS[type(node)]
        fact = StatementFact(
            line=node.lineno,
            end_line=node.end_lineno or node.lineno,
            indent=self._indent_of(node.lineno),
            starts_line=self._starts_line(node.lineno, node.col_offset),
            kind=kind,
        )
        target_names: tuple[str, ...] = ()
        value: ast.expr | None = None
        if isinstance(node, ast.Expr):
            value = node.value
        elif isinstance(node, ast.Assign):
            value = node.value
            fact.target_text = " = ".join(
                ast.get_source_segment(self.source, t) or "" for t in node.targets
            )
            target_names = tuple(
                t.id for t in node.targets if isinstance(t, ast.Name)
            )
            for target in node.targets:
                if not isinstance(target, ast.Name):
                    self._walk_expr(target, fact, False)
        elif isinstance(node, ast.AnnAssign):
            value = node.value
            fact.target_text = ast.get_source_segment(self.source, node.target)
            if isinstance(node.target, ast.Name):
                target_names = (node.target.id,)
        elif isinstance(node, ast.AugAssign):
            value = node.value
            fact.target_text = ast.get_source_segment(self.source, node.target)
            if not isinstance(node.target, ast.Name):
                self._walk_expr(node.target, fact, False)
        fact.target_names = target_names
        self.facts.statements.append(fact)

        value_call_id: int | None = None
        if value is not None:
            is_call = isinstance(value, ast.Call)
            before = self._next_call_id
            self._walk_expr(value, fact, is_call)
            if is_call:
                value_call_id = before
        if kind in ("assign", "ann"):
            self.facts.assigns.append(
                (self.scope, node.lineno, target_names, value_call_id)
            )

    def _record_plain_span(self, node: ast.stmt) -> None:
        self.facts.statements.append(
            StatementFact(
                line=node.lineno,
                end_line=node.end_lineno or node.lineno,
                indent=self._indent_of(node.lineno),
                starts_line=self._starts_line(node.lineno, node.col_offset),
                kind="other",
            )
        )

    def _record_plain_span_header(self, node: ast.stmt) -> None:
        # compound headers own only their first line for sharing purposes
        self.facts.statements.append(
            StatementFact(
                line=node.lineno,
                end_line=node.lineno,
                indent=self._indent_of(node.lineno),
                starts_line=self._starts_line(node.lineno, node.col_offset),
                kind="other",
            )
        )

    def _indent_of(self, lineno: int) -> str:
        line = self.lines[lineno - 1]
        return line[: len(line) - len(line.lstrip())]

    def _starts_line(self, lineno: int, col: int) -> bool:
        prefix = self.lines[lineno - 1][:col]
        return prefix.strip() == ""

    # -- expressions --------------------------------------------------

    def _walk_expr(
        self, node: ast.expr, stmt: StatementFact | None, is_stmt_value: bool
    ) -> None:
        if isinstance(node, ast.Call):
            self._walk_call(node, stmt, is_stmt_value)
            return
        for child in ast.iter_child_nodes(node):
            if isinstance(child, ast.expr):
                self._walk_expr(child, stmt, False)
            elif isinstance(child, (ast.comprehension, ast.keyword)):
                for sub in ast.iter_child_nodes(child):
                    if isinstance(sub, ast.expr):
                        self._walk_expr(sub, stmt, False)

    def _walk_call(
        self, node: ast.Call, stmt: StatementFact | None, is_stmt_value: bool
    ) -> None:
        root, parts, through = _chain(node.func)
        receiver = None
        if isinstance(node.func, ast.Attribute):
            receiver = ast.get_source_segment(self.source, node.func.value)
        elif isinstance(node.func, ast.Name):
            receiver = node.func.id

        arg_texts = tuple(self._segment(arg) for arg in node.args)
        kwarg_texts = tuple(
            (kw.arg, self._segment(kw.value)) for kw in node.keywords
        )
        call_id = self._next_call_id
        self._next_call_id += 1
        self.facts.calls.append(
            CallFact(
                call_id=call_id,
                scope=self.scope,
                line=node.lineno,
                col=node.col_offset,
                end_line=node.end_lineno or node.lineno,
                chain_root=root,
                chain_parts=parts,
                through_call=through,
                receiver_text=receiver,
                arg_texts=arg_texts,
                kwarg_texts=kwarg_texts,
                stmt=stmt,
                is_stmt_value=is_stmt_value,
                parent_call_ids=tuple(self._call_stack),
            )
        )
        self._call_stack.append(call_id)
        self._walk_expr_children_of_call(node, stmt)
        self._call_stack.pop()

    def _walk_expr_children_of_call(
        self, node: ast.Call, stmt: StatementFact | None
    ) -> None:
        if not isinstance(node.func, ast.Name):
            self._walk_expr(node.func, stmt, False)
        for arg in node.args:
            self._walk_expr(arg, stmt, False)
        for kw in node.keywords:
            self._walk_expr(kw.value, stmt, False)

    def _segment(self, node: ast.expr) -> str:
        text = ast.get_source_segment(self.source, node) or ""
        # a bare generator argument must keep its own parentheses when
        # re-embedded inside a list literal
        if isinstance(node, ast.GeneratorExp) and not text.startswith("("):
            text = f"({text})"
        return text
