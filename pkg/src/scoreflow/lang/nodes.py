"""AST node types for the workflow language.

Nodes are frozen dataclasses. Source spans are carried for error reporting
but excluded from equality, so a parsed tree compares equal to a hand-built
or re-parsed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class ListOf:
    names: tuple[str, ...]


Arg = Union[Str, VarRef, ListOf]


@dataclass(frozen=True)
class Call:
    operator: str
    kwargs: tuple[tuple[str, Arg], ...] = ()
    span: Span | None = field(default=None, compare=False, repr=False)

    def kwarg_names(self) -> list[str]:
        return [name for name, _ in self.kwargs]


@dataclass(frozen=True)
class Let:
    name: str
    call: Call
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LetEmptyList:
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Push:
    target: str
    value: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple[Statement, ...]
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IfTest:
    condition: str
    then_body: tuple[Statement, ...]
    else_body: tuple[Statement, ...]
    span: Span | None = field(default=None, compare=False, repr=False)


Statement = Union[Let, LetEmptyList, Push, Repeat, IfTest]


@dataclass(frozen=True)
class Workflow:
    statements: tuple[Statement, ...]
    return_expr: str
    return_span: Span | None = field(default=None, compare=False, repr=False)


def iter_calls(statements):
    """Yield every Call node in program order, descending into blocks."""
    for stmt in statements:
        if isinstance(stmt, Let):
            yield stmt.call
        elif isinstance(stmt, Repeat):
            yield from iter_calls(stmt.body)
        elif isinstance(stmt, IfTest):
            yield from iter_calls(stmt.then_body)
            yield from iter_calls(stmt.else_body)


def operators_used(wf: Workflow) -> frozenset[str]:
    return frozenset(call.operator for call in iter_calls(wf.statements))


def static_call_count(wf: Workflow) -> int:
    """Number of operator calls, multiplied through literal loop bounds.

    Conditional branches contribute the larger of the two sides. The
    condition of an ``if test(...)`` is not a Call node and is not counted.
    """
    return _count(wf.statements)


def _count(statements) -> int:
    total = 0
    for stmt in statements:
        if isinstance(stmt, Let):
            total += 1
        elif isinstance(stmt, Repeat):
            total += stmt.count * _count(stmt.body)
        elif isinstance(stmt, IfTest):
            total += max(_count(stmt.then_body), _count(stmt.else_body))
    return total
