"""Linear-softmax workflow generator over a fixed, validated workflow bank.

The generator scores every bank program with ``logits = theta @ x`` for task
features ``x`` and samples from the softmax, so ``log pi(y|x)`` and its
gradient are exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .lang import Limits, Workflow, format_workflow, parse, split_bank_text, validate, workflow_digest
from .runtime.registry import build_registry


class ShapeMismatch(ValueError):
    pass


class IndexOutOfBank(IndexError):
    pass


class CorruptCheckpoint(ValueError):
    pass


class BankError(ValueError):
    pass


@dataclass(frozen=True)
class BankEntry:
    workflow: Workflow
    text: str
    digest: str


@dataclass(frozen=True)
class WorkflowBank:
    entries: tuple[BankEntry, ...]
    templates: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.entries) < 2:
            raise BankError("a workflow bank needs at least two programs")
        digests = [e.digest for e in self.entries]
        if len(set(digests)) != len(digests):
            raise BankError("bank programs must be distinct")

    @classmethod
    def from_workflows(cls, workflows, templates=None) -> "WorkflowBank":
        entries = tuple(BankEntry(wf, format_workflow(wf), workflow_digest(wf)) for wf in workflows)
        return cls(entries, dict(templates or {}))

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> BankEntry:
        return self.entries[index]

    @property
    def workflows(self) -> list[Workflow]:
        return [e.workflow for e in self.entries]

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(e.digest.encode())
        return h.hexdigest()

    def template_index(self, category: str) -> int:
        return self.templates.get(category, 0)

    def reports(self, registry=None, limits=None):
        registry = registry or build_registry()
        return [validate(e.workflow, registry, limits) for e in self.entries]


def _pragma_categories(chunk: str) -> list[str]:
    cats = []
    for line in chunk.splitlines():
        line = line.strip()
        if line.startswith("#!") and line[2:].strip().startswith("template:"):
            cats.extend(line[2:].strip()[len("template:"):].split())
    return cats


def parse_bank(text: str, *, registry=None, limits: Limits | None = None, strict: bool = True) -> WorkflowBank:
    """Parse a ``.flows`` bank; with ``strict`` every program must validate."""
    workflows, templates = [], {}
    for index, (lineno, chunk) in enumerate(split_bank_text(text)):
        try:
            wf = parse(chunk)
        except ValueError as exc:
            raise BankError(f"program {index} (line {lineno}): {exc}") from None
        workflows.append(wf)
        for cat in _pragma_categories(chunk):
            templates.setdefault(cat, index)
    bank = WorkflowBank.from_workflows(workflows, templates)
    if strict:
        for index, report in enumerate(bank.reports(registry, limits)):
            if not report.ok:
                raise BankError(f"program {index} fails validation: {report.codes()}")
    return bank


def load_bank(path=None, **kwargs) -> WorkflowBank:
    if path is None or str(path) == "":
        text = resources.files("scoreflow.data").joinpath("default.flows").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_bank(text, **kwargs)


@dataclass(frozen=True)
class PolicyParams:
    weights: np.ndarray
    bank_digest: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeMismatch("policy weights must be a B x F matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("policy weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, bank_size: int, n_features: int, bank_digest: str = "") -> "PolicyParams":
        return cls(np.zeros((bank_size, n_features)), bank_digest)

    @property
    def B(self) -> int:
        return self.weights.shape[0]

    @property
    def F(self) -> int:
        return self.weights.shape[1]

    def replace(self, weights) -> "PolicyParams":
        return PolicyParams(weights, self.bank_digest)


def _features(p: PolicyParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.F,):
        raise ShapeMismatch(f"feature vector has shape {x.shape}, policy expects ({p.F},)")
    return x


def logits(p: PolicyParams, x) -> np.ndarray:
    return p.weights @ _features(p, x)


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = np.max(z)
    shifted = z - m
    return shifted - math.log(np.sum(np.exp(shifted)))


def log_probs(p: PolicyParams, x) -> np.ndarray:
    return log_softmax(logits(p, x))


def log_prob(p: PolicyParams, x, y: int) -> float:
    if not 0 <= y < p.B:
        raise IndexOutOfBank(f"bank index {y} outside [0, {p.B})")
    return float(log_probs(p, x)[y])


def probs(p: PolicyParams, x) -> np.ndarray:
    return np.exp(log_probs(p, x))


def sample_workflow(p: PolicyParams, x, rng: np.random.Generator) -> int:
    return int(rng.choice(p.B, p=probs(p, x)))


def grad_log_prob(p: PolicyParams, x, y: int) -> np.ndarray:
    """d log pi(y|x) / d theta = (onehot(y) - softmax) outer x."""
    if not 0 <= y < p.B:
        raise IndexOutOfBank(f"bank index {y} outside [0, {p.B})")
    x = _features(p, x)
    coef = -probs(p, x)
    coef[y] += 1.0
    return np.outer(coef, x)


def _tie_hash(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


def argmax_workflow(p: PolicyParams, x, tie_key: str | None = None) -> int:
    """Greedy (temperature-0) choice; exact ties are broken by a hash of ``tie_key``."""
    z = logits(p, x)
    best = np.flatnonzero(z == z.max())
    if len(best) == 1 or tie_key is None:
        return int(best[0])
    return int(best[_tie_hash(tie_key) % len(best)])


@dataclass
class PolicyCheckpoint:
    theta: PolicyParams
    theta_ref: PolicyParams
    config_digest: str = ""
    rng_state: dict = field(default_factory=dict)
    iteration: int = 0

    def __post_init__(self):
        if self.theta.weights.shape != self.theta_ref.weights.shape:
            raise ShapeMismatch("theta and theta_ref must share a shape")
        if self.theta.bank_digest != self.theta_ref.bank_digest:
            raise ValueError("theta and theta_ref must share a bank digest")


def _payload(ckpt: PolicyCheckpoint) -> dict:
    return {
        "bank_digest": ckpt.theta.bank_digest,
        "F": ckpt.theta.F,
        "B": ckpt.theta.B,
        "theta": [float(v) for v in ckpt.theta.weights.ravel()],
        "theta_ref": [float(v) for v in ckpt.theta_ref.weights.ravel()],
        "rng_state": ckpt.rng_state,
        "iteration": ckpt.iteration,
        "config_digest": ckpt.config_digest,
    }


def _checksum(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def save_checkpoint(ckpt: PolicyCheckpoint, path) -> Path:
    payload = _payload(ckpt)
    payload["checksum"] = _checksum(payload)
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path, bank: WorkflowBank | None = None) -> PolicyCheckpoint:
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
        checksum = payload.pop("checksum")
        B, F = int(payload["B"]), int(payload["F"])
        theta = np.array(payload["theta"], dtype=np.float64).reshape(B, F)
        theta_ref = np.array(payload["theta_ref"], dtype=np.float64).reshape(B, F)
    except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable checkpoint ({exc})") from None
    if _checksum(payload) != checksum:
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    digest = payload["bank_digest"]
    if bank is not None and (bank.digest != digest or len(bank) != B):
        raise CorruptCheckpoint(f"{path}: checkpoint was written for a different bank")
    return PolicyCheckpoint(
        theta=PolicyParams(theta, digest),
        theta_ref=PolicyParams(theta_ref, digest),
        config_digest=payload["config_digest"],
        rng_state=payload["rng_state"],
        iteration=int(payload["iteration"]),
    )
