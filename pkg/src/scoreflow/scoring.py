"""Evaluation scores in [0, 1] for executed workflows."""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field

from .runtime.interpreter import RuntimeFault, interpret

_PUNCT = str.maketrans("", "", string.punctuation)
_ARTICLES = re.compile(r"\b(a|an|the)\b")
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?%?")

METRIC_KINDS = ("token_f1", "exact_match")


def normalize_answer(text: str) -> list[str]:
    """Lowercase, drop punctuation and articles, split on whitespace."""
    text = text.lower().translate(_PUNCT)
    text = _ARTICLES.sub(" ", text)
    return text.split()


def token_f1(prediction: str, gold: str) -> float:
    pred = normalize_answer(prediction)
    ref = normalize_answer(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def parse_number(text: str) -> float | None:
    text = text.strip()
    if not _NUMBER.fullmatch(text):
        return None
    if text.endswith("%"):
        return float(text[:-1]) / 100.0
    return float(text)


def exact_match(prediction: str, gold: str) -> float:
    a, b = parse_number(prediction), parse_number(gold)
    if a is not None and b is not None:
        return float(math.isclose(a, b, rel_tol=1e-9))
    return float(normalize_answer(prediction) == normalize_answer(gold))


@dataclass(frozen=True)
class Metric:
    kind: str = "exact_match"
    repeats: int = 3

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"metric kind must be one of {METRIC_KINDS}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    def __call__(self, prediction: str, gold: str) -> float:
        return token_f1(prediction, gold) if self.kind == "token_f1" else exact_match(prediction, gold)


@dataclass(frozen=True)
class Score:
    value: float
    repeats_used: int
    per_repeat: tuple[float, ...]
    faults: int = 0
    executor_calls: int = 0
    token_cost: tuple[int, int] = (0, 0)
    per_repeat_outputs: tuple[str, ...] = field(default=(), compare=False, repr=False)


class CandidateFailed(RuntimeFault):
    """Every repeat of a candidate faulted: C* fails at runtime."""

    def __init__(self, faults):
        self.faults = list(faults)
        super().__init__("; ".join(f"{type(f).__name__}: {f}" for f in self.faults))


def evaluate_workflow(wf, task, executor, metric: Metric | None = None, limits=None, *, digest=None, registry=None) -> Score:
    """Run ``wf`` on ``task`` ``metric.repeats`` times and average the scores.

    A faulted repeat scores 0. If every repeat faults, CandidateFailed is raised.
    """
    metric = metric or Metric()
    per_repeat, outputs, faults = [], [], []
    calls = prompt_tokens = completion_tokens = 0
    for r in range(metric.repeats):
        try:
            result = interpret(wf, task, executor, limits, repeat=r, digest=digest, registry=registry)
        except RuntimeFault as exc:
            faults.append(exc)
            per_repeat.append(0.0)
            outputs.append("")
            continue
        calls += result.calls
        prompt_tokens += result.token_cost[0]
        completion_tokens += result.token_cost[1]
        outputs.append(result.output)
        per_repeat.append(metric(result.output, task.gold))
    if len(faults) == metric.repeats:
        raise CandidateFailed(faults)
    return Score(
        value=math.fsum(per_repeat) / len(per_repeat),
        repeats_used=metric.repeats,
        per_repeat=tuple(per_repeat),
        faults=len(faults),
        executor_calls=calls,
        token_cost=(prompt_tokens, completion_tokens),
        per_repeat_outputs=tuple(outputs),
    )
