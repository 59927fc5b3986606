import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import bag_f1
from scoreflow.lang import Limits, parse
from scoreflow.runtime import PlantedWorldSpec, Completion, planted_executor
from scoreflow.runtime.interpreter import ExecutorFault
from scoreflow.scoring import (
    CandidateFailed,
    Metric,
    evaluate_workflow,
    exact_match,
    normalize_answer,
    parse_number,
    token_f1,
)

MINIMAL = parse("workflow { let s = answer_generate() return s }")


@pytest.mark.parametrize(
    "text, tokens",
    [("The cat, sat.", ["cat", "sat"]), ("", []), ("A  B the b", ["b", "b"]), ("an Apple's  pie!", ["apples", "pie"])],
)
def test_normalize_answer(text, tokens):
    assert normalize_answer(text) == tokens


@pytest.mark.parametrize(
    "pred, gold, value",
    [
        ("cat sat", "cat sat", 1.0),
        # "the" is dropped: pred {cat, sat}, P = 1, R = 2/3, F1 = 0.8
        ("the cat sat", "cat sat down", 0.8),
        ("x", "y", 0.0),
        ("", "", 1.0),
        ("", "y", 0.0),
        ("a the", "an", 1.0),
        ("b b c", "b c c", 2 / 3),
    ],
)
def test_token_f1_fixtures(pred, gold, value):
    assert token_f1(pred, gold) == pytest.approx(value, abs=1e-15)


def test_token_f1_matches_bag_oracle():
    rng = np.random.default_rng(1)
    vocab = ["cat", "sat", "mat", "dog", "run", "x", "y"]
    for _ in range(1000):
        pred = list(rng.choice(vocab, size=rng.integers(0, 8)))
        gold = list(rng.choice(vocab, size=rng.integers(0, 8)))
        assert abs(token_f1(" ".join(pred), " ".join(gold)) - bag_f1(pred, gold)) <= 1e-12


words = st.lists(st.sampled_from(["cat", "sat", "The", "a", "dog", "42", "x,"]), max_size=8).map(" ".join)


@given(words, words)
def test_token_f1_bounds_and_symmetry(a, b):
    f = token_f1(a, b)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(token_f1(b, a), abs=1e-15)
    if normalize_answer(a):
        assert token_f1(a, a) == 1.0


@given(words, words)
def test_exact_match_implies_full_f1(a, b):
    if parse_number(a) is None and exact_match(a, b) == 1.0:
        assert token_f1(a, b) == 1.0


@pytest.mark.parametrize(
    "pred, gold, value",
    [
        ("42", "42", 1.0),
        ("10%", "0.1", 1.0),
        ("0.1", "10%", 1.0),
        ("41", "42", 0.0),
        ("1.0", "1", 1.0),
        ("1.5", "15", 0.0),
        ("The Answer.", "answer", 1.0),
        ("Paris", "paris france", 0.0),
        ("-3e2", "-300", 1.0),
    ],
)
def test_exact_match(pred, gold, value):
    assert exact_match(pred, gold) == value


def test_parse_number():
    assert parse_number(" 12.5% ") == pytest.approx(0.125)
    assert parse_number("abc") is None
    assert parse_number("1,000") is None


def test_metric_validation():
    with pytest.raises(ValueError):
        Metric(repeats=0)
    with pytest.raises(ValueError):
        Metric(kind="bleu")
    assert Metric("token_f1")("the cat", "cat") == 1.0


def test_evaluate_minimal_template_on_simple_task(tasks):
    task = next(t for t in tasks if t.category == "simple")
    score = evaluate_workflow(MINIMAL, task, planted_executor(PlantedWorldSpec()), Metric(repeats=3))
    assert score.value == 1.0
    assert score.per_repeat == (1.0, 1.0, 1.0)
    assert score.repeats_used == 3
    assert score.executor_calls == 6


def test_evaluate_complex_task_fails_rule(tasks):
    task = next(t for t in tasks if t.category == "complex")
    assert evaluate_workflow(MINIMAL, task, planted_executor(PlantedWorldSpec())).value == 0.0


def test_noisy_repeats_are_reproducible(tasks):
    ex = planted_executor(PlantedWorldSpec(noise_flip_prob=1 / 3, seed=5))
    patterns = [
        [evaluate_workflow(MINIMAL, t, ex, Metric(repeats=3)).per_repeat for t in tasks[:10]] for _ in range(2)
    ]
    assert patterns[0] == patterns[1]
    flat = [v for rep in patterns[0] for v in rep]
    assert 0 < flat.count(0.0) < len(flat)
    for t in tasks[:10]:
        s = evaluate_workflow(MINIMAL, t, ex, Metric(repeats=3))
        assert abs(s.value - math.fsum(s.per_repeat) / 3) <= 1e-15


class FlakyExecutor:
    """Faults on the first repeat of every evaluation, or always."""

    def __init__(self, always=False):
        self.always = always
        self.inner = planted_executor(PlantedWorldSpec())

    def complete(self, request, ctx):
        if self.always or ctx.repeat == 0:
            raise ExecutorFault("transport error")
        return self.inner.complete(request, ctx)

    def verdict(self, request, ctx):
        return True, Completion("pass")


def test_partial_faults_score_zero(tasks):
    task = next(t for t in tasks if t.category == "simple")
    score = evaluate_workflow(MINIMAL, task, FlakyExecutor(), Metric(repeats=3), Limits())
    assert score.per_repeat == (0.0, 1.0, 1.0)
    assert score.faults == 1
    assert score.value == pytest.approx(2 / 3)


def test_total_fault_is_candidate_failure(tasks):
    with pytest.raises(CandidateFailed):
        evaluate_workflow(MINIMAL, tasks[0], FlakyExecutor(always=True), Metric(repeats=2))
