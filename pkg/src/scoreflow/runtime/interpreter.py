"""Workflow interpreter and the executor abstraction it dispatches to."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Protocol

from ..lang import IfTest, Let, LetEmptyList, ListOf, Limits, Push, Repeat, Str, VarRef, Workflow
from ..lang.printer import workflow_digest
from .tasks import Task


class RuntimeFault(Exception):
    """A workflow failed to execute; the candidate does not satisfy C* at runtime."""


class Timeout(RuntimeFault):
    pass


class ExecutorFault(RuntimeFault):
    pass


class UnknownOperator(RuntimeFault):
    pass


class UnboundVariable(RuntimeFault):
    pass


@dataclass(frozen=True)
class ExecutorRequest:
    operator_name: str
    task_prompt: str
    kwarg_values: tuple[tuple[str, str | tuple[str, ...]], ...] = ()
    temperature: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")

    @property
    def kwargs(self) -> dict:
        return dict(self.kwarg_values)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.operator_name.encode())
        h.update(b"\0" + self.task_prompt.encode())
        for key, value in self.kwarg_values:
            h.update(b"\0" + key.encode() + b"=")
            if isinstance(value, tuple):
                h.update("\x1f".join(value).encode())
            else:
                h.update(value.encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    attempts: int = 1


@dataclass(frozen=True)
class CallContext:
    """What an executor may know about the call beyond the request itself."""

    task: Task
    workflow: Workflow
    workflow_digest: str
    repeat: int = 0


class Executor(Protocol):
    def complete(self, request: ExecutorRequest, ctx: CallContext) -> Completion: ...

    def verdict(self, request: ExecutorRequest, ctx: CallContext) -> tuple[bool, Completion]: ...


@dataclass(frozen=True)
class TraceEntry:
    operator_name: str
    request_digest: str
    response_digest: str
    elapsed: float
    attempts: int = 1


@dataclass
class ExecutionResult:
    output: str
    per_call_trace: list[TraceEntry] = field(default_factory=list)
    total_elapsed: float = 0.0
    token_cost: tuple[int, int] = (0, 0)
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def calls(self) -> int:
        return len(self.per_call_trace)


class _Run:
    def __init__(self, task, executor, limits, ctx, registry, temperature):
        self.task = task
        self.executor = executor
        self.limits = limits
        self.ctx = ctx
        self.registry = registry
        self.temperature = temperature
        self.env: dict[str, str | list[str]] = {}
        self.trace: list[TraceEntry] = []
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.verdicts: dict[str, bool] = {}
        self.start = time.monotonic()

    def lookup(self, name: str):
        try:
            return self.env[name]
        except KeyError:
            raise UnboundVariable(name) from None

    def resolve(self, arg):
        if isinstance(arg, Str):
            return arg.value
        if isinstance(arg, VarRef):
            value = self.lookup(arg.name)
            return tuple(value) if isinstance(value, list) else value
        if isinstance(arg, ListOf):
            return tuple(self.lookup(n) for n in arg.names)
        raise TypeError(arg)

    def check_clock(self):
        if time.monotonic() - self.start > self.limits.wall_clock_timeout:
            raise Timeout(f"workflow exceeded {self.limits.wall_clock_timeout:g}s")

    def request(self, op: str, kwargs) -> ExecutorRequest:
        if self.registry is not None and op not in self.registry:
            raise UnknownOperator(op)
        return ExecutorRequest(op, self.task.prompt, tuple(kwargs), self.temperature)

    def record(self, req: ExecutorRequest, comp: Completion, t0: float, response: str):
        self.trace.append(
            TraceEntry(
                req.operator_name,
                req.digest(),
                hashlib.sha256(response.encode()).hexdigest()[:16],
                time.monotonic() - t0,
                comp.attempts,
            )
        )
        self.prompt_tokens += comp.prompt_tokens
        self.completion_tokens += comp.completion_tokens
        self.check_clock()

    def dispatch(self, op: str, kwargs) -> str:
        req = self.request(op, kwargs)
        t0 = time.monotonic()
        comp = self.executor.complete(req, self.ctx)
        self.record(req, comp, t0, comp.text)
        return comp.text

    def test(self, name: str) -> bool:
        value = self.lookup(name)
        req = self.request("test", [("solution", value)])
        t0 = time.monotonic()
        passed, comp = self.executor.verdict(req, self.ctx)
        self.record(req, comp, t0, "pass" if passed else "fail")
        self.verdicts[name] = passed
        return passed

    def block(self, statements):
        for stmt in statements:
            if isinstance(stmt, Let):
                kwargs = [(k, self.resolve(v)) for k, v in stmt.call.kwargs]
                self.env[stmt.name] = self.dispatch(stmt.call.operator, kwargs)
            elif isinstance(stmt, LetEmptyList):
                self.env[stmt.name] = []
            elif isinstance(stmt, Push):
                target = self.lookup(stmt.target)
                if not isinstance(target, list):
                    raise RuntimeFault(f"push target {stmt.target!r} is not a list")
                target.append(self.lookup(stmt.value))
            elif isinstance(stmt, Repeat):
                for _ in range(stmt.count):
                    self.block(stmt.body)
            elif isinstance(stmt, IfTest):
                self.block(stmt.then_body if self.test(stmt.condition) else stmt.else_body)
            else:
                raise TypeError(stmt)


def interpret(
    wf: Workflow,
    task: Task,
    executor: Executor,
    limits: Limits | None = None,
    *,
    repeat: int = 0,
    registry=None,
    digest: str | None = None,
    temperature: float = 0.0,
) -> ExecutionResult:
    """Execute ``wf`` on ``task``; the returned value goes through extract_answer.

    Raises a RuntimeFault subclass on timeout, executor failure or a program
    that slipped past validation.
    """
    limits = limits or Limits()
    ctx = CallContext(task, wf, digest or workflow_digest(wf), repeat)
    run = _Run(task, executor, limits, ctx, registry, temperature)
    run.block(wf.statements)
    value = run.lookup(wf.return_expr)
    if isinstance(value, list):
        raise RuntimeFault("workflow returned a list")
    output = run.dispatch("extract_answer", [("solution", value)])
    return ExecutionResult(
        output=output,
        per_call_trace=run.trace,
        total_elapsed=time.monotonic() - run.start,
        token_cost=(run.prompt_tokens, run.completion_tokens),
        verdicts=run.verdicts,
    )


def estimate_tokens(*texts) -> int:
    total = 0
    for text in texts:
        if isinstance(text, (tuple, list)):
            total += estimate_tokens(*text)
        else:
            total += len(str(text).split())
    return total
