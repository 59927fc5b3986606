"""Random generators shared by the property tests and the acceptance suite."""

import string

import numpy as np
from scipy import stats

from scoreflow.lang import Call, IfTest, Let, LetEmptyList, ListOf, Push, Repeat, Str, VarRef, Workflow
from scoreflow.lang.parser import KEYWORDS
from scoreflow.policy import PolicyParams
from scoreflow.preference import PreferenceDataset, PreferencePair

_IDENT_START = string.ascii_lowercase + "_"
_IDENT_REST = _IDENT_START + string.digits
_STRING_CHARS = string.printable + "éß€中"


def random_ident(rng) -> str:
    while True:
        n = int(rng.integers(1, 9))
        word = rng.choice(list(_IDENT_START)) + "".join(rng.choice(list(_IDENT_REST), size=n - 1))
        if word not in KEYWORDS:
            return str(word)


def random_string(rng) -> str:
    n = int(rng.integers(0, 16))
    return "".join(rng.choice(list(_STRING_CHARS), size=n))


def _arg(rng):
    kind = rng.integers(3)
    if kind == 0:
        return Str(random_string(rng))
    if kind == 1:
        return VarRef(random_ident(rng))
    return ListOf(tuple(random_ident(rng) for _ in range(int(rng.integers(1, 4)))))


def _call(rng):
    kwargs = tuple((random_ident(rng), _arg(rng)) for _ in range(int(rng.integers(0, 3))))
    return Call(random_ident(rng), kwargs)


def random_statements(rng, depth):
    out = []
    for _ in range(int(rng.integers(0, 4))):
        kind = rng.integers(5 if depth > 0 else 3)
        if kind == 0:
            out.append(Let(random_ident(rng), _call(rng)))
        elif kind == 1:
            out.append(LetEmptyList(random_ident(rng)))
        elif kind == 2:
            out.append(Push(random_ident(rng), random_ident(rng)))
        elif kind == 3:
            out.append(Repeat(int(rng.integers(1, 1000)), tuple(random_statements(rng, depth - 1))))
        else:
            out.append(
                IfTest(
                    random_ident(rng),
                    tuple(random_statements(rng, depth - 1)),
                    tuple(random_statements(rng, depth - 1)),
                )
            )
    return out


def random_workflow(rng, depth=3) -> Workflow:
    """A syntactically valid (not necessarily semantically valid) AST."""
    return Workflow(tuple(random_statements(rng, depth)), random_ident(rng))


VIOLATIONS = {
    "UnknownOperator": "workflow { let s = magic() return s }",
    "UnboundVariable": "workflow { let s = review(pre_solution=draft) return s }",
    "BadKwarg": 'workflow { let s = custom(prompt="x") return s }',
    "LoopBoundExceeded": "workflow { let l = [] repeat 11 { let a = answer_generate() push l, a } return a }",
    "CallBudgetExceeded": "workflow { repeat 10 { repeat 6 { let a = answer_generate() } } return a }",
}


def bag_f1(pred_tokens, gold_tokens):
    """Brute-force reference: remove matched tokens one at a time."""
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    remaining = list(gold_tokens)
    overlap = 0
    for tok in pred_tokens:
        if tok in remaining:
            remaining.remove(tok)
            overlap += 1
    if overlap == 0:
        return 0.0
    p, r = overlap / len(pred_tokens), overlap / len(gold_tokens)
    return 2 * p * r / (p + r)


def random_policy(rng, bank=6, features=3, scale=1.0) -> PolicyParams:
    return PolicyParams(rng.normal(scale=scale, size=(bank, features)), "")


def random_pair(rng, bank=6, features=3, task_id="t0") -> PreferencePair:
    w, l = rng.choice(bank, size=2, replace=False)
    s_l, s_w = np.sort(rng.random(2))
    if s_w == s_l:
        s_w = min(1.0, s_l + 1e-3)
    x = (1.0, *rng.random(features - 1))
    return PreferencePair(task_id, x, int(w), int(l), float(s_w), float(s_l))


def random_dataset(rng, max_pairs=20, bank=6, features=3, n_tasks=3) -> PreferenceDataset:
    """Pairs over a few tasks; each task has one fixed context."""
    contexts = {f"t{i}": (1.0, *rng.random(features - 1)) for i in range(n_tasks)}
    pairs = []
    for _ in range(int(rng.integers(1, max_pairs + 1))):
        tid = f"t{int(rng.integers(n_tasks))}"
        p = random_pair(rng, bank, features, tid)
        pairs.append(PreferencePair(tid, contexts[tid], p.winner_index, p.loser_index, p.s_w, p.s_l))
    return PreferenceDataset(tuple(pairs))


def chi2_pvalue(draws, probs) -> float:
    """Goodness of fit of integer draws to ``probs``; cells expecting < 5 are pooled."""
    probs = np.asarray(probs, dtype=np.float64)
    n = len(draws)
    counts = np.bincount(draws, minlength=len(probs)).astype(np.float64)
    expected = probs * n
    order = np.argsort(expected)[::-1]
    obs, exp = [], []
    for i in order:
        if exp and exp[-1] < 5 or (obs and expected[i] < 5):
            obs[-1] += counts[i]
            exp[-1] += expected[i]
        else:
            obs.append(counts[i])
            exp.append(expected[i])
    if len(obs) < 2:
        return 1.0
    return float(stats.chisquare(obs, exp).pvalue)


def theorem_violations(rng, beta, alpha=3, grid=21, scale=1.0, max_pairs=12):
    """Sweep s_z over a grid for every sample z of one random dataset.

    Returns (violations, comparisons). A comparison is made between two
    consecutive grid points only when the reward condition holds at both and
    every pair holding z keeps s_w > s_l.
    """
    from scoreflow.preference import WeightConfig
    from scoreflow.score_dpo import Sample, TrainConfig, implicit_reward, influence, theorem_condition, with_sample_score

    ds = random_dataset(rng, max_pairs=max_pairs, n_tasks=2)
    ref = random_policy(rng)
    p = ref.replace(ref.weights + rng.normal(scale=scale, size=ref.weights.shape))
    cfg = TrainConfig(beta=beta, weight_cfg=WeightConfig(alpha))
    feats = {q.task_id: q.features for q in ds.pairs}
    samples = sorted({(q.task_id, i) for q in ds.pairs for i in (q.winner_index, q.loser_index)})
    values = np.linspace(0.0, 1.0, grid)
    violations = comparisons = 0
    for task_id, index in samples:
        z = Sample(task_id, index)
        r_z = implicit_reward(p, ref, feats[task_id], index, beta)
        mine = [q for q in ds.pairs if q.task_id == task_id and index in (q.winner_index, q.loser_index)]

        def ordered(s):
            for q in mine:
                s_w = s if q.winner_index == index else q.s_w
                s_l = s if q.loser_index == index else q.s_l
                if not s_w > s_l:
                    return False
            return True

        ok = [theorem_condition(r_z, s) and ordered(s) for s in values]
        infl = [influence(z, with_sample_score(ds, z, float(s)), p, ref, cfg) if good else None for s, good in zip(values, ok)]
        for i in range(grid - 1):
            if ok[i] and ok[i + 1]:
                comparisons += 1
                violations += not infl[i + 1] > infl[i]
    return violations, comparisons
