"""Preference pairs from scored candidates, and the score-gap sampling law."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scoring import Score


class DomainError(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class ZeroMass(ValueError):
    pass


@dataclass(frozen=True)
class ScoredCandidate:
    task_id: str
    bank_index: int
    workflow_digest: str
    score: Score


@dataclass(frozen=True)
class PreferencePair:
    task_id: str
    features: tuple[float, ...]
    winner_index: int
    loser_index: int
    s_w: float
    s_l: float

    def __post_init__(self):
        if not self.s_w > self.s_l:
            raise DomainError(f"winner score {self.s_w} must exceed loser score {self.s_l}")
        if self.winner_index == self.loser_index:
            raise DomainError("winner and loser must be different bank entries")
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "features": list(self.features),
            "winner_index": self.winner_index,
            "loser_index": self.loser_index,
            "s_w": self.s_w,
            "s_l": self.s_l,
        }


@dataclass(frozen=True)
class PreferenceDataset:
    pairs: tuple[PreferencePair, ...]
    iteration: int = 0
    config_digest: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.iteration}|{self.config_digest}".encode())
        for pair in self.pairs:
            h.update(json.dumps(pair.to_json(), sort_keys=True).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class WeightConfig:
    """Pair weight d(s_w, s_l) = (s_w - s_l) ** alpha, or 1 in uniform mode."""

    alpha: float = 3.0
    mode: str = "power"

    def __post_init__(self):
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise ValueError("alpha must be a finite non-negative number")
        if self.mode not in ("power", "uniform"):
            raise ValueError("weight mode must be 'power' or 'uniform'")


def build_pairs(candidates, features) -> list[PreferencePair]:
    """All ordered pairs (i, j) of one task's candidates with s_i > s_j.

    Ties produce no pair. Candidates sharing a bank index cannot be paired
    with each other (a pair needs two distinct workflows).
    """
    candidates = list(candidates)
    if len({c.task_id for c in candidates}) > 1:
        raise ValueError("build_pairs expects candidates of a single task")
    pairs = []
    for ci in candidates:
        for cj in candidates:
            si, sj = ci.score.value, cj.score.value
            if si > sj and ci.bank_index != cj.bank_index:
                pairs.append(
                    PreferencePair(ci.task_id, tuple(features), ci.bank_index, cj.bank_index, si, sj)
                )
    return pairs


def aggregate(per_task, iteration: int = 0, config_digest: str = "") -> PreferenceDataset:
    return PreferenceDataset(
        tuple(pair for pairs in per_task for pair in pairs), iteration, config_digest
    )


def pair_weight(s_w: float, s_l: float, cfg: WeightConfig) -> float:
    if not (0.0 <= s_l < s_w <= 1.0):
        raise DomainError(f"pair weight needs 0 <= s_l < s_w <= 1, got ({s_w}, {s_l})")
    if cfg.mode == "uniform":
        return 1.0
    return (s_w - s_l) ** cfg.alpha


def log_pair_weights(s_w, s_l, cfg: WeightConfig) -> np.ndarray:
    """log d(s_w, s_l) for arrays of scores; exact for large alpha where d underflows."""
    gap = np.asarray(s_w, dtype=np.float64) - np.asarray(s_l, dtype=np.float64)
    if np.any(gap <= 0):
        raise DomainError("every pair needs s_w > s_l")
    if cfg.mode == "uniform" or cfg.alpha == 0:
        return np.zeros_like(gap)
    return cfg.alpha * np.log(gap)


def sampling_probs(ds: PreferenceDataset, cfg: WeightConfig) -> np.ndarray:
    """Normalized P*(w, l) over the pairs of ``ds``, computed in log space."""
    if len(ds) == 0:
        raise EmptyDataset("preference dataset is empty")
    logw = log_pair_weights([p.s_w for p in ds.pairs], [p.s_l for p in ds.pairs], cfg)
    top = np.max(logw)
    if not np.isfinite(top):
        raise ZeroMass("all pair weights are zero")
    w = np.exp(logw - top)
    return w / w.sum()


def sample_pair_indices(ds: PreferenceDataset, cfg: WeightConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if n == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(len(ds), size=n, replace=True, p=sampling_probs(ds, cfg)).astype(np.int64)


def sample_pairs(ds: PreferenceDataset, cfg: WeightConfig, rng: np.random.Generator, n: int) -> list[PreferencePair]:
    """n i.i.d. draws (with replacement) from P*(w, l) ∝ d(s_w, s_l)."""
    return [ds.pairs[i] for i in sample_pair_indices(ds, cfg, rng, n)]


def save_dataset(ds: PreferenceDataset, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps({"iteration": ds.iteration, "config_digest": ds.config_digest}, sort_keys=True) + "\n")
        for pair in ds.pairs:
            fh.write(json.dumps(pair.to_json(), sort_keys=True) + "\n")
    return path


def load_dataset(path) -> PreferenceDataset:
    header = {"iteration": 0, "config_digest": ""}
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                header.update(json.loads(line[1:]))
                continue
            obj = json.loads(line)
            try:
                pairs.append(
                    PreferencePair(
                        obj["task_id"],
                        tuple(obj["features"]),
                        int(obj["winner_index"]),
                        int(obj["loser_index"]),
                        float(obj["s_w"]),
                        float(obj["s_l"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad preference record ({exc})") from None
    return PreferenceDataset(tuple(pairs), int(header["iteration"]), str(header["config_digest"]))
