"""Static executability checks (the compile-time half of the C* gate)."""

from __future__ import annotations

from dataclasses import dataclass, field

from .nodes import Call, IfTest, Let, LetEmptyList, ListOf, Push, Repeat, Span, Str, VarRef, Workflow, static_call_count


@dataclass(frozen=True)
class Limits:
    max_loop_bound: int = 10
    max_static_calls: int = 50
    wall_clock_timeout: float = 120.0  # seconds; enforced by the interpreter

    def __post_init__(self):
        if self.max_loop_bound <= 0 or self.max_static_calls <= 0 or self.wall_clock_timeout <= 0:
            raise ValueError("limits must be strictly positive")


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    span: Span | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    static_call_count: int
    ok: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ok", not self.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


# Kinds tracked for bound variables.
STRING, LIST = "string", "list"


class _Checker:
    def __init__(self, registry, limits: Limits):
        self.registry = registry
        self.limits = limits
        self.violations: list[Violation] = []

    def add(self, code, message, span=None):
        self.violations.append(Violation(code, message, span))

    def need(self, env: dict, name: str, kind: str, span, what: str):
        have = env.get(name)
        if have is None:
            self.add("UnboundVariable", f"{what}: variable {name!r} is not bound", span)
        elif have != kind:
            self.add("TypeMismatch", f"{what}: {name!r} is a {have}, expected a {kind}", span)

    def block(self, statements, env: dict) -> dict:
        env = dict(env)
        for stmt in statements:
            if isinstance(stmt, Let):
                self.call(stmt.call, env)
                env[stmt.name] = STRING
            elif isinstance(stmt, LetEmptyList):
                env[stmt.name] = LIST
            elif isinstance(stmt, Push):
                self.need(env, stmt.target, LIST, stmt.span, "push target")
                self.need(env, stmt.value, STRING, stmt.span, "push value")
            elif isinstance(stmt, Repeat):
                if stmt.count > self.limits.max_loop_bound:
                    self.add(
                        "LoopBoundExceeded",
                        f"loop bound {stmt.count} exceeds {self.limits.max_loop_bound}",
                        stmt.span,
                    )
                # the body runs at least once, so its bindings survive the loop
                env = self.block(stmt.body, env)
            elif isinstance(stmt, IfTest):
                self.need(env, stmt.condition, STRING, stmt.span, "test condition")
                then_env = self.block(stmt.then_body, env)
                else_env = self.block(stmt.else_body, env)
                env = {
                    name: kind
                    for name, kind in then_env.items()
                    if else_env.get(name) == kind
                }
        return env

    def call(self, call: Call, env: dict):
        spec = self.registry.get(call.operator)
        if spec is None:
            self.add("UnknownOperator", f"operator {call.operator!r} is not registered", call.span)
            return
        names = call.kwarg_names()
        kinds = spec.kwarg_kinds
        if len(set(names)) != len(names):
            self.add("BadKwarg", f"{call.operator}: duplicate keyword argument", call.span)
        missing = [k for k in kinds if k not in names]
        extra = [k for k in names if k not in kinds]
        if missing or extra:
            self.add(
                "BadKwarg",
                f"{call.operator}: kwargs {names} do not match signature {list(kinds)}",
                call.span,
            )
        for key, arg in call.kwargs:
            kind = kinds.get(key)
            if kind is None:
                continue
            where = f"{call.operator}({key}=...)"
            if kind == "string":
                if not isinstance(arg, Str):
                    self.add("BadKwarg", f"{where} takes a string literal", call.span)
            elif kind == "var":
                if isinstance(arg, VarRef):
                    self.need(env, arg.name, STRING, call.span, where)
                else:
                    self.add("BadKwarg", f"{where} takes a variable", call.span)
            elif kind == "list":
                if isinstance(arg, ListOf):
                    for name in arg.names:
                        self.need(env, name, STRING, call.span, where)
                elif isinstance(arg, VarRef):
                    self.need(env, arg.name, LIST, call.span, where)
                else:
                    self.add("BadKwarg", f"{where} takes a list", call.span)


def validate(wf: Workflow, registry, limits: Limits | None = None) -> ValidationReport:
    if not registry:
        raise ValueError("registry must be nonempty")
    limits = limits or Limits()
    checker = _Checker(registry, limits)
    env = checker.block(wf.statements, {})
    if wf.return_expr not in env:
        checker.add("UnboundReturn", f"return value {wf.return_expr!r} is not bound", wf.return_span)
    elif env[wf.return_expr] != STRING:
        checker.add("TypeMismatch", f"return value {wf.return_expr!r} must be a string", wf.return_span)
    count = static_call_count(wf)
    if count > limits.max_static_calls:
        checker.add(
            "CallBudgetExceeded",
            f"static call count {count} exceeds {limits.max_static_calls}",
        )
    return ValidationReport(tuple(checker.violations), count)
