"""Score-DPO: score-weighted implicit rewards, loss, gradient, influence and training."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .policy import PolicyParams, grad_log_prob, log_prob, log_probs
from .preference import (
    DomainError,
    EmptyDataset,
    PreferenceDataset,
    WeightConfig,
    sample_pair_indices,
)


class NonFinite(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 0.1
    eta: float = 0.05
    samples_per_iter: int = 2000
    batch_size: int = 1
    reward_weight_mode: str = "score"
    weight_cfg: WeightConfig = field(default_factory=WeightConfig)
    seed: int = 0
    max_epochs_inner: int = 1
    convergence_eps: float = 0.005
    early_stop: bool = False
    method: str = "score_dpo"

    def __post_init__(self):
        if not (self.beta > 0 and self.eta >= 0):
            raise ValueError("beta must be > 0 and eta >= 0")
        if self.samples_per_iter < 1 or self.batch_size < 1 or self.max_epochs_inner < 1:
            raise ValueError("samples_per_iter, batch_size and max_epochs_inner must be >= 1")
        if self.reward_weight_mode not in ("score", "unit"):
            raise ValueError("reward_weight_mode must be 'score' or 'unit'")
        if self.method not in ("score_dpo", "sft"):
            raise ValueError("method must be 'score_dpo' or 'sft'")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrainStats:
    mean_loss: float = 0.0
    grad_norm: float = 0.0
    fraction_r_in_unit_ball: float = 0.0
    samples_seen: int = 0
    epoch: int = 0


def implicit_reward(p: PolicyParams, ref: PolicyParams, x, y: int, beta: float) -> float:
    """r(x, y) = beta * log(pi_theta(y|x) / pi_ref(y|x))."""
    return beta * (log_prob(p, x, y) - log_prob(ref, x, y))


def _check_score(s: float):
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"score {s} outside [0, 1]")


def reward_weights(s_w: float, s_l: float, mode: str) -> tuple[float, float]:
    """(f(s_w), 1 - f(s_l)) with f the identity; (1, 1) for plain DPO."""
    _check_score(s_w)
    _check_score(s_l)
    if mode == "unit":
        return 1.0, 1.0
    return s_w, 1.0 - s_l


def weighted_rewards(r_w: float, r_l: float, s_w: float, s_l: float, mode: str = "score") -> tuple[float, float]:
    a, c = reward_weights(s_w, s_l, mode)
    return a * r_w, c * r_l


def softplus(v: float) -> float:
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


def sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _margin(pair, p, ref, cfg: TrainConfig) -> float:
    r_w = implicit_reward(p, ref, pair.features, pair.winner_index, cfg.beta)
    r_l = implicit_reward(p, ref, pair.features, pair.loser_index, cfg.beta)
    rw_star, rl_star = weighted_rewards(r_w, r_l, pair.s_w, pair.s_l, cfg.reward_weight_mode)
    return rw_star - rl_star


def pair_loss(pair, p: PolicyParams, ref: PolicyParams, cfg: TrainConfig) -> float:
    """-log sigmoid(r_w* - r_l*), evaluated as a softplus."""
    return softplus(-_margin(pair, p, ref, cfg))


def pair_loss_grad(pair, p: PolicyParams, ref: PolicyParams, cfg: TrainConfig) -> np.ndarray:
    assert pair.winner_index != pair.loser_index, "pairs always hold two distinct workflows"
    a, c = reward_weights(pair.s_w, pair.s_l, cfg.reward_weight_mode)
    sig = sigmoid(-_margin(pair, p, ref, cfg))
    g_w = grad_log_prob(p, pair.features, pair.winner_index)
    g_l = grad_log_prob(p, pair.features, pair.loser_index)
    return -sig * cfg.beta * (a * g_w - c * g_l)


@dataclass(frozen=True)
class Sample:
    """Identity of one side of a pair: a task and the bank entry chosen for it."""

    task_id: str
    bank_index: int


def with_sample_score(ds: PreferenceDataset, z: Sample, score: float) -> PreferenceDataset:
    """Copy of ``ds`` with every stored score of ``z`` replaced; pair roles are kept.

    The copy may violate s_w > s_l; use only for influence sweeps.
    """
    pairs = []
    for pair in ds.pairs:
        s_w, s_l = pair.s_w, pair.s_l
        if pair.task_id == z.task_id and pair.winner_index == z.bank_index:
            s_w = score
        if pair.task_id == z.task_id and pair.loser_index == z.bank_index:
            s_l = score
        pairs.append(_RawPair(pair.task_id, pair.features, pair.winner_index, pair.loser_index, s_w, s_l))
    return PreferenceDataset(tuple(pairs), ds.iteration, ds.config_digest)


@dataclass(frozen=True)
class _RawPair:
    task_id: str
    features: tuple
    winner_index: int
    loser_index: int
    s_w: float
    s_l: float


def influence(z: Sample, ds: PreferenceDataset, p: PolicyParams, ref: PolicyParams, cfg: TrainConfig) -> float:
    """Per-sample influence of ``z``, by exact enumeration over ``ds``.

    Mean over pairs (uniform P) of
    d(s_w, s_l) * sigmoid(r_l* - r_w*) * (f(s_w) [w = z] - (1 - f(s_l)) [l = z]).
    """
    if len(ds) == 0:
        raise EmptyDataset("influence needs a nonempty dataset")
    total = 0.0
    for pair in ds.pairs:
        is_w = pair.task_id == z.task_id and pair.winner_index == z.bank_index
        is_l = pair.task_id == z.task_id and pair.loser_index == z.bank_index
        if not (is_w or is_l):
            continue
        a, c = reward_weights(pair.s_w, pair.s_l, cfg.reward_weight_mode)
        weight = _pair_weight_raw(pair.s_w, pair.s_l, cfg.weight_cfg)
        sig = sigmoid(-_margin(pair, p, ref, cfg))
        total += weight * sig * (a * is_w - c * is_l)
    return total / len(ds)


def _pair_weight_raw(s_w: float, s_l: float, wcfg: WeightConfig) -> float:
    # d on raw scores; influence sweeps may move s_w below s_l
    if wcfg.mode == "uniform":
        return 1.0
    gap = s_w - s_l
    if gap <= 0:
        return 0.0 if wcfg.alpha > 0 else 1.0
    return gap ** wcfg.alpha


def theorem_condition(r_z: float, s_z: float) -> bool:
    """-(1 - f(s_z))^-1 <= r_z <= f^-1(s_z) with f the identity."""
    lower = -math.inf if s_z >= 1.0 else -1.0 / (1.0 - s_z)
    upper = math.inf if s_z <= 0.0 else 1.0 / s_z
    return lower <= r_z <= upper


def _pair_arrays(ds: PreferenceDataset, ref: PolicyParams, cfg: TrainConfig):
    X = np.array([pair.features for pair in ds.pairs], dtype=np.float64)
    yw = np.array([pair.winner_index for pair in ds.pairs], dtype=np.int64)
    yl = np.array([pair.loser_index for pair in ds.pairs], dtype=np.int64)
    if X.shape[1] != ref.F:
        raise ValueError(f"pair features have length {X.shape[1]}, policy expects {ref.F}")
    if yw.max() >= ref.B or yl.max() >= ref.B:
        raise IndexError("pair references a bank index outside the policy")
    weights = [reward_weights(pair.s_w, pair.s_l, cfg.reward_weight_mode) for pair in ds.pairs]
    cw = np.array([w[0] for w in weights])
    cl = np.array([w[1] for w in weights])
    ref_lp = np.array([log_probs(ref, x) for x in X])
    rows = np.arange(len(ds))
    return X, yw, yl, cw, cl, ref_lp[rows, yw], ref_lp[rows, yl]


def _early_stop_chunks(S: int, batch_size: int, enabled: bool) -> list[int]:
    if not enabled:
        return [S]
    chunk = max(batch_size, (200 // batch_size) * batch_size)
    sizes = [chunk] * (S // chunk)
    if S % chunk:
        sizes.append(S % chunk)
    return sizes


def train_inner(
    p: PolicyParams,
    ref: PolicyParams,
    ds: PreferenceDataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
    backend: str | None = None,
) -> tuple[PolicyParams, list[TrainStats]]:
    """Stochastic gradient descent on the Score-DPO loss with pairs drawn from P*.

    Each epoch draws ``cfg.samples_per_iter`` pairs and applies
    ``ceil(S / batch_size)`` updates. One TrainStats record is returned per epoch.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot train on an empty preference dataset")
    X, yw, yl, cw, cl, ref_w, ref_l = _pair_arrays(ds, ref, cfg)
    theta = np.array(p.weights, dtype=np.float64, order="C")
    stats = []
    seen = 0
    for epoch in range(cfg.max_epochs_inner):
        order = sample_pair_indices(ds, cfg.weight_cfg, rng, cfg.samples_per_iter)
        losses, norms, in_ball = [], [], 0
        prev_mean = None
        start = 0
        for size in _early_stop_chunks(len(order), cfg.batch_size, cfg.early_stop):
            part = order[start:start + size]
            start += size
            l, g, ball, bad = _kernels.score_dpo_sgd(
                theta, X, yw, yl, cw, cl, ref_w, ref_l, part, cfg.beta, cfg.eta, cfg.batch_size, backend
            )
            if bad >= 0:
                raise NonFinite(
                    f"non-finite gradient at epoch {epoch}, step {bad} of chunk starting at sample {start - size}"
                )
            losses.append(l)
            norms.append(g)
            in_ball += ball
            seen += size
            mean = float(np.mean(l))
            if prev_mean is not None and prev_mean - mean < 1e-4:
                break
            prev_mean = mean
        losses = np.concatenate(losses)
        norms = np.concatenate(norms)
        stats.append(
            TrainStats(
                mean_loss=float(np.mean(losses)),
                grad_norm=float(np.mean(norms)),
                fraction_r_in_unit_ball=in_ball / (2 * len(losses)),
                samples_seen=seen,
                epoch=epoch,
            )
        )
    if not np.all(np.isfinite(theta)):
        raise NonFinite("policy parameters became non-finite")
    return p.replace(theta), stats


def sft_update(
    p: PolicyParams,
    winners,
    features: dict,
    cfg: TrainConfig,
    rng: np.random.Generator,
    backend: str | None = None,
) -> tuple[PolicyParams, list[TrainStats]]:
    """Supervised baseline: raise log pi of score-sampled workflows.

    ``winners`` are ScoredCandidates; each draw picks one with probability
    proportional to its score. ``features`` maps task id to feature vector.
    """
    winners = [c for c in winners if c.score.value > 0]
    if not winners:
        raise EmptyDataset("SFT needs at least one candidate with a positive score")
    X = np.array([features[c.task_id] for c in winners], dtype=np.float64)
    y = np.array([c.bank_index for c in winners], dtype=np.int64)
    weights = np.array([c.score.value for c in winners])
    theta = np.array(p.weights, dtype=np.float64, order="C")
    stats = []
    seen = 0
    for epoch in range(cfg.max_epochs_inner):
        order = rng.choice(len(winners), size=cfg.samples_per_iter, p=weights / weights.sum())
        losses, norms, bad = _kernels.sft_sgd(theta, X, y, order, cfg.eta, cfg.batch_size, backend)
        if bad >= 0:
            raise NonFinite(f"non-finite gradient at epoch {epoch}, step {bad}")
        seen += len(order)
        # no reference policy in SFT, so the implicit-reward monitor is undefined
        stats.append(TrainStats(float(np.mean(losses)), float(np.mean(norms)), math.nan, seen, epoch))
    return p.replace(theta), stats


def dataset_implicit_rewards(ds: PreferenceDataset, p: PolicyParams, ref: PolicyParams, beta: float) -> np.ndarray:
    """Implicit rewards of every pair member, winners then losers."""
    out = []
    for pair in ds.pairs:
        out.append(implicit_reward(p, ref, pair.features, pair.winner_index, beta))
        out.append(implicit_reward(p, ref, pair.features, pair.loser_index, beta))
    return np.array(out)

