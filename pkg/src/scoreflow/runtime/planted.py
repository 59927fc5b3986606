"""Deterministic stand-in executor with a known answer key.

Whether a workflow solves a task is decided by a per-category rule over the
program's static call count and operator set. Optional label noise flips the
verdict with a fixed probability; the coin is a hash of (seed, task id,
workflow digest, repeat), so results never depend on scheduling order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..lang import operators_used, static_call_count
from .interpreter import CallContext, Completion, ExecutorRequest, estimate_tokens

WRONG = "WRONG"


@dataclass(frozen=True)
class Rule:
    max_calls: int | None = None
    requires: frozenset[str] = frozenset()

    def accepts(self, call_count: int, operators: frozenset[str]) -> bool:
        if self.max_calls is not None and call_count > self.max_calls:
            return False
        return self.requires <= operators

    def __str__(self) -> str:
        parts = []
        if self.max_calls is not None:
            parts.append(f"max_calls:{self.max_calls}")
        if self.requires:
            parts.append("requires:" + "+".join(sorted(self.requires)))
        return ",".join(parts) or "any"


def parse_rules(text: str) -> dict[str, Rule]:
    """Parse ``simple=max_calls:2;complex=requires:programmer+sc_ensemble``."""
    rules = {}
    for item in filter(None, (s.strip() for s in text.split(";"))):
        category, _, body = item.partition("=")
        max_calls, requires = None, frozenset()
        for clause in filter(None, (c.strip() for c in body.split(","))):
            key, _, value = clause.partition(":")
            if key == "max_calls":
                max_calls = int(value)
            elif key == "requires":
                requires = frozenset(v.strip() for v in value.split("+") if v.strip())
            elif key != "any":
                raise ValueError(f"unknown rule clause {clause!r}")
        rules[category.strip()] = Rule(max_calls, requires)
    return rules


def format_rules(rules: dict[str, Rule]) -> str:
    return ";".join(f"{cat}={rule}" for cat, rule in rules.items())


DEFAULT_RULES = {
    "simple": Rule(max_calls=2),
    "complex": Rule(requires=frozenset({"programmer", "sc_ensemble"})),
}


@dataclass(frozen=True)
class PlantedWorldSpec:
    rules: dict[str, Rule] = field(default_factory=lambda: dict(DEFAULT_RULES))
    noise_flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_flip_prob < 0.5:
            raise ValueError("noise_flip_prob must lie in [0, 0.5)")

    def solves(self, ctx: CallContext) -> bool:
        rule = self.rules.get(ctx.task.category)
        if rule is None:
            correct = False
        else:
            correct = rule.accepts(static_call_count(ctx.workflow), operators_used(ctx.workflow))
        if self.noise_flip_prob > 0 and self._coin(ctx) < self.noise_flip_prob:
            correct = not correct
        return correct

    def _coin(self, ctx: CallContext) -> float:
        key = f"{self.seed}|{ctx.task.id}|{ctx.workflow_digest}|{ctx.repeat}".encode()
        return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") / 2.0**64


class PlantedExecutor:
    """Executor whose final answer is the gold string iff the planted rule says so."""

    def __init__(self, spec: PlantedWorldSpec):
        self.spec = spec

    def complete(self, request: ExecutorRequest, ctx: CallContext) -> Completion:
        if request.operator_name == "extract_answer":
            text = ctx.task.gold if self.spec.solves(ctx) else WRONG
        else:
            text = f"<{request.operator_name}:{request.digest()[:8]}>"
        return Completion(
            text,
            prompt_tokens=estimate_tokens(request.task_prompt, *request.kwargs.values()),
            completion_tokens=estimate_tokens(text),
        )

    def verdict(self, request: ExecutorRequest, ctx: CallContext) -> tuple[bool, Completion]:
        solution = request.kwargs.get("solution", "")
        passed = isinstance(solution, str) and solution.strip() == ctx.task.gold.strip()
        return passed, Completion("pass" if passed else "fail", estimate_tokens(solution), 1)


def planted_executor(spec: PlantedWorldSpec) -> PlantedExecutor:
    return PlantedExecutor(spec)
