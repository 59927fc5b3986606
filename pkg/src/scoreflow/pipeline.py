"""The iterative optimization loop: generate, score, pair, train, evaluate."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .policy import (
    PolicyCheckpoint,
    PolicyParams,
    WorkflowBank,
    argmax_workflow,
    load_bank,
    sample_workflow,
    save_checkpoint,
)
from .preference import PreferenceDataset, ScoredCandidate, aggregate, build_pairs, save_dataset
from .runtime.interpreter import RuntimeFault
from .runtime.planted import planted_executor
from .runtime.registry import build_registry
from .runtime.remote import remote_executor
from .runtime.tasks import Task, load_tasks
from .score_dpo import TrainStats, sft_update, train_inner
from .scoring import evaluate_workflow

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration",
    "split",
    "solve_rate",
    "mean_loss",
    "fraction_r_in_unit_ball",
    "executor_calls",
    "token_cost",
)
TRAIN_COLUMNS = ("iteration", "epoch", "samples_seen", "mean_loss", "grad_norm", "fraction_r_in_unit_ball")
REFERENCE_UNIT_BALL_FRACTION = 0.911


def split_tasks(tasks: list[Task], cfg: RunConfig) -> tuple[list[Task], list[Task]]:
    """Stratified validation/test split; validation tasks are the training set."""
    val_frac, _ = cfg.split_fractions()
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    validation, test = [], []
    for category in sorted({t.category for t in tasks}):
        group = [t for t in tasks if t.category == category]
        order = rng.permutation(len(group))
        n_val = int(round(len(group) * val_frac))
        chosen = set(order[:n_val].tolist())
        for i, task in enumerate(group):
            (validation if i in chosen else test).append(task)
    return validation, test


def generate_candidates(task: Task, policy: PolicyParams, bank: WorkflowBank, k: int, valid, rng, resample_cap: int = 16):
    """Draw k bank indices from the policy, redrawing statically invalid ones.

    After ``resample_cap`` rejected draws for one slot, the slot falls back to
    the task category's template. Returns (indices, number of redraws).
    """
    picks, redraws = [], 0
    for _ in range(k):
        for _attempt in range(resample_cap):
            idx = sample_workflow(policy, task.features, rng)
            if valid[idx]:
                break
            redraws += 1
        else:
            idx = bank.template_index(task.category)
            logger.warning("task %s: resample cap reached, using template %d", task.id, idx)
        picks.append(idx)
    return picks, redraws


@dataclass
class IterationState:
    iteration: int
    candidates: dict[str, list[ScoredCandidate]] = field(default_factory=dict)
    dataset: PreferenceDataset | None = None
    stats: list[TrainStats] = field(default_factory=list)
    validation_solve_rate: float = 0.0
    test_solve_rate: float = 0.0
    checkpoint_path: str = ""
    failed_candidates: int = 0
    redraws: int = 0
    calls: dict[str, int] = field(default_factory=dict)
    tokens: dict[str, int] = field(default_factory=dict)

    def summary(self) -> dict:
        last = self.stats[-1] if self.stats else None
        return {
            "iteration": self.iteration,
            "pairs": 0 if self.dataset is None else len(self.dataset),
            "validation_solve_rate": self.validation_solve_rate,
            "test_solve_rate": self.test_solve_rate,
            "mean_loss": None if last is None else last.mean_loss,
            "grad_norm": None if last is None else last.grad_norm,
            "fraction_r_in_unit_ball": None if last is None else last.fraction_r_in_unit_ball,
            "failed_candidates": self.failed_candidates,
            "redraws": self.redraws,
            "executor_calls": dict(self.calls),
            "token_cost": dict(self.tokens),
            "checkpoint": self.checkpoint_path,
        }


@dataclass
class Report:
    iterations: list[dict] = field(default_factory=list)
    baseline: dict = field(default_factory=dict)
    final_validation_solve_rate: float = 0.0
    final_test_solve_rate: float = 0.0
    converged: bool = False
    reason: str = ""
    wall_clock: float = 0.0
    executor_calls: int = 0
    token_cost: int = 0
    reference_unit_ball_fraction: float = REFERENCE_UNIT_BALL_FRACTION

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _solve_rate(scores) -> float:
    return math.fsum(scores) / len(scores) if scores else 0.0


class Experiment:
    """Holds the state of one optimization run (tasks, bank, executor, policy, RNGs)."""

    def __init__(self, cfg: RunConfig, tasks=None, bank=None, executor=None):
        self.cfg = cfg
        self.registry = build_registry()
        self.limits = cfg.limits()
        self.metric = cfg.metric_spec()
        self.train_cfg = cfg.train_config()
        self.bank = bank if bank is not None else load_bank(cfg.bank_path or None, registry=self.registry, limits=self.limits)
        self.valid = [r.ok for r in self.bank.reports(self.registry, self.limits)]
        if tasks is None:
            if not cfg.tasks_path:
                raise ValueError("tasks_path is not set")
            tasks = load_tasks(cfg.tasks_path)
        self.tasks = list(tasks)
        self.validation, self.test = split_tasks(self.tasks, cfg)
        if not self.validation:
            raise ValueError("the validation split is empty")
        if executor is None:
            executor = planted_executor(cfg.planted_spec()) if cfg.executor == "planted" else remote_executor(cfg.endpoint())
        self.executor = executor
        n_features = len(self.tasks[0].features)
        if any(len(t.features) != n_features for t in self.tasks):
            raise ValueError("all tasks need feature vectors of equal length")
        self.policy = PolicyParams.zeros(len(self.bank), n_features, self.bank.digest)
        self.reference = self.policy
        gen_seq, train_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.gen_rng = np.random.default_rng(gen_seq)
        self.train_rng = np.random.default_rng(train_seq)
        self.iteration = 0
        self.out = Path(cfg.output_dir) if cfg.output_dir else None

    # evaluation -----------------------------------------------------------

    def _score_jobs(self, jobs):
        """Score (task, bank index) jobs, fanned out across threads, in job order."""

        def work(job):
            task, idx = job
            entry = self.bank[idx]
            try:
                return evaluate_workflow(
                    entry.workflow, task, self.executor, self.metric, self.limits, digest=entry.digest, registry=self.registry
                )
            except RuntimeFault as exc:
                return exc

        if self.cfg.parallelism == 1 or len(jobs) < 2:
            return [work(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=self.cfg.parallelism) as pool:
            return list(pool.map(work, jobs))

    def choose(self, task: Task) -> int:
        return argmax_workflow(self.policy, task.features, tie_key=f"{self.cfg.seed}|{task.id}")

    def evaluate_split(self, tasks) -> tuple[float, int, int]:
        results = self._score_jobs([(t, self.choose(t)) for t in tasks])
        scores, calls, tokens = [], 0, 0
        for res in results:
            if isinstance(res, Exception):
                scores.append(0.0)
                continue
            scores.append(res.value)
            calls += res.executor_calls
            tokens += sum(res.token_cost)
        return _solve_rate(scores), calls, tokens

    # one iteration -----------------------------------------------------------

    def collect(self, state: IterationState) -> PreferenceDataset:
        jobs = []
        for task in self.validation:
            picks, redraws = generate_candidates(
                task, self.policy, self.bank, self.cfg.k, self.valid, self.gen_rng, self.cfg.resample_cap
            )
            state.redraws += redraws
            jobs.extend((task, idx) for idx in picks)
        results = self._score_jobs(jobs)
        per_task: dict[str, list[ScoredCandidate]] = {t.id: [] for t in self.validation}
        calls = tokens = 0
        for (task, idx), res in zip(jobs, results):
            if isinstance(res, Exception):
                state.failed_candidates += 1
                logger.info("candidate %d for %s failed C*: %s", idx, task.id, res)
                continue
            calls += res.executor_calls
            tokens += sum(res.token_cost)
            per_task[task.id].append(ScoredCandidate(task.id, idx, self.bank[idx].digest, res))
        state.candidates = per_task
        state.calls["validation"] = calls
        state.tokens["validation"] = tokens
        by_id = {t.id: t for t in self.validation}
        pairs = [build_pairs(per_task[tid], by_id[tid].features) for tid in per_task]
        return aggregate(pairs, state.iteration, self.cfg.digest())

    def train(self, state: IterationState, ds: PreferenceDataset):
        if self.train_cfg.method == "sft":
            winners = [c for cands in state.candidates.values() for c in cands]
            feats = {t.id: t.features for t in self.validation}
            if any(c.score.value > 0 for c in winners):
                self.policy, state.stats = sft_update(self.policy, winners, feats, self.train_cfg, self.train_rng)
            return
        if len(ds) == 0:
            logger.warning("iteration %d: no preference pairs, skipping the update", state.iteration)
            return
        self.policy, state.stats = train_inner(self.policy, self.reference, ds, self.train_cfg, self.train_rng)

    def run_iteration(self) -> IterationState:
        self.iteration += 1
        state = IterationState(self.iteration)
        if self.cfg.refresh_ref or self.iteration == 1:
            self.reference = self.policy
        ds = self.collect(state)
        state.dataset = ds
        self.train(state, ds)
        val, val_calls, val_tokens = self.evaluate_split(self.validation)
        test, test_calls, test_tokens = self.evaluate_split(self.test) if self.test else (0.0, 0, 0)
        state.validation_solve_rate, state.test_solve_rate = val, test
        state.calls["validation"] += val_calls
        state.tokens["validation"] += val_tokens
        state.calls["test"] = test_calls
        state.tokens["test"] = test_tokens
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            ckpt = self.checkpoint()
            state.checkpoint_path = str(save_checkpoint(ckpt, self.out / f"checkpoint_{self.iteration}.json"))
            save_dataset(ds, self.out / f"prefs_{self.iteration}.jsonl")
        return state

    def checkpoint(self) -> PolicyCheckpoint:
        return PolicyCheckpoint(
            theta=self.policy,
            theta_ref=self.reference,
            config_digest=self.cfg.digest(),
            rng_state={
                "generate": self.gen_rng.bit_generator.state,
                "train": self.train_rng.bit_generator.state,
            },
            iteration=self.iteration,
        )


def run(cfg: RunConfig, tasks=None, bank=None, executor=None) -> Report:
    """Iterate up to cfg.M times, stopping once validation stops improving."""
    t0 = time.monotonic()
    exp = Experiment(cfg, tasks, bank, executor)
    report = Report()
    base_val, c1, k1 = exp.evaluate_split(exp.validation)
    base_test, c2, k2 = exp.evaluate_split(exp.test) if exp.test else (0.0, 0, 0)
    report.baseline = {"validation_solve_rate": base_val, "test_solve_rate": base_test}
    report.executor_calls += c1 + c2
    report.token_cost += k1 + k2
    prev = base_val
    states = []
    report.reason = "max_iterations"
    for _ in range(cfg.M):
        state = exp.run_iteration()
        states.append(state)
        report.iterations.append(state.summary())
        report.executor_calls += sum(state.calls.values())
        report.token_cost += sum(state.tokens.values())
        logger.info(
            "iteration %d: pairs=%d validation=%.3f test=%.3f",
            state.iteration,
            len(state.dataset),
            state.validation_solve_rate,
            state.test_solve_rate,
        )
        improvement = state.validation_solve_rate - prev
        prev = state.validation_solve_rate
        if improvement < cfg.convergence_eps:
            report.converged = True
            report.reason = "converged"
            break
    last = states[-1]
    report.final_validation_solve_rate = last.validation_solve_rate
    report.final_test_solve_rate = last.test_solve_rate
    report.wall_clock = time.monotonic() - t0
    if exp.out is not None:
        emit_metrics(report, exp.out / "metrics.csv")
        emit_train_metrics(report, exp.out / "train_metrics.csv", states)
        (exp.out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    return report


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def emit_metrics(report: Report, path) -> Path:
    """Write one row per (iteration, split); overwrites, so re-emission is idempotent."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for it in report.iterations:
        for split in ("validation", "test"):
            writer.writerow(
                [
                    it["iteration"],
                    split,
                    _fmt(it[f"{split}_solve_rate"]),
                    _fmt(it["mean_loss"]),
                    _fmt(it["fraction_r_in_unit_ball"]),
                    it["executor_calls"].get(split, 0),
                    it["token_cost"].get(split, 0),
                ]
            )
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def emit_train_metrics(report: Report, path, states) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAIN_COLUMNS)
    for state in states:
        for st in state.stats:
            writer.writerow(
                [state.iteration, st.epoch, st.samples_seen, _fmt(st.mean_loss), _fmt(st.grad_norm), _fmt(st.fraction_r_in_unit_ball)]
            )
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def ablate(cfg: RunConfig, alphas, tasks=None, bank=None, executor=None) -> list[dict]:
    """Run the loop once per alpha with identical seeds; alpha 0 is the DPO row.

    Writes ``ablation.csv`` under cfg.output_dir. Each arm's run artifacts go
    to ``alpha_<value>/``.
    """
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one alpha")
    rows = []
    base = Path(cfg.output_dir) if cfg.output_dir else None
    for alpha in alphas:
        arm_dir = str(base / f"alpha_{alpha:g}") if base is not None else ""
        arm = cfg.with_(alpha=float(alpha), weight_mode="power", output_dir=arm_dir)
        report = run(arm, tasks, bank, executor)
        rows.append(
            {
                "alpha": float(alpha),
                "final_validation_solve_rate": report.final_validation_solve_rate,
                "final_test_solve_rate": report.final_test_solve_rate,
                "iterations": len(report.iterations),
            }
        )
    if base is not None:
        base.mkdir(parents=True, exist_ok=True)
        with open(base / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows
