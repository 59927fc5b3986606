"""Command-line entry point: ``scoreflow <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .lang import format_workflow, parse, split_bank_text, validate, workflow_digest
from .policy import load_bank, load_checkpoint
from .preference import load_dataset
from .runtime.planted import planted_executor
from .runtime.registry import build_registry
from .runtime.remote import remote_executor
from .runtime.tasks import load_tasks, planted_tasks, save_tasks
from .score_dpo import Sample, influence, implicit_reward
from .scoring import CandidateFailed, evaluate_workflow


def _config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def cmd_validate_bank(args) -> int:
    registry = build_registry()
    cfg = _config(args)
    text = Path(args.bank).read_text("utf-8")
    failures = 0
    for index, (lineno, chunk) in enumerate(split_bank_text(text)):
        try:
            wf = parse(chunk)
        except ValueError as exc:
            print(f"[{index}] line {lineno}: SyntaxError: {exc}")
            failures += 1
            continue
        report = validate(wf, registry, cfg.limits())
        status = "ok" if report.ok else "REJECTED"
        print(f"[{index}] line {lineno}: {status} calls={report.static_call_count} digest={workflow_digest(wf)[:12]}")
        for v in report.violations:
            where = f" at {v.span.line}:{v.span.col}" if v.span else ""
            print(f"    {v.code}{where}: {v.message}")
        failures += not report.ok
    return 1 if failures else 0


def cmd_run(args) -> int:
    from .pipeline import run

    cfg = _config(args)
    if args.output_dir:
        cfg = cfg.with_(output_dir=args.output_dir)
    report = run(cfg)
    print(json.dumps({k: v for k, v in report.to_json().items() if k != "iterations"}, indent=2, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    from .pipeline import ablate

    cfg = _config(args)
    if args.output_dir:
        cfg = cfg.with_(output_dir=args.output_dir)
    alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    rows = ablate(cfg, alphas)
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    tasks_path = args.tasks or cfg.tasks_path
    if not tasks_path:
        raise ConfigError("score needs --tasks or a config with tasks_path")
    tasks = {t.id: t for t in load_tasks(tasks_path)}
    if args.task not in tasks:
        raise ConfigError(f"task {args.task!r} not found in {tasks_path}")
    wf = parse(Path(args.program).read_bytes())
    registry = build_registry()
    report = validate(wf, registry, cfg.limits())
    if not report.ok:
        print(json.dumps({"ok": False, "violations": report.codes()}))
        return 1
    executor = planted_executor(cfg.planted_spec()) if cfg.executor == "planted" else remote_executor(cfg.endpoint())
    try:
        score = evaluate_workflow(
            wf, tasks[args.task], executor, cfg.metric_spec(), cfg.limits(), digest=workflow_digest(wf), registry=registry
        )
    except CandidateFailed as exc:
        print(json.dumps({"ok": False, "fault": str(exc)}))
        return 1
    print(
        json.dumps(
            {
                "ok": True,
                "program": format_workflow(wf),
                "score": score.value,
                "per_repeat": list(score.per_repeat),
                "faults": score.faults,
                "executor_calls": score.executor_calls,
                "token_cost": list(score.token_cost),
            }
        )
    )
    return 0


def cmd_influence(args) -> int:
    cfg = _config(args)
    bank = load_bank(args.bank or cfg.bank_path or None)
    ckpt = load_checkpoint(args.checkpoint, bank)
    ds = load_dataset(args.dataset)
    train_cfg = cfg.train_config()
    samples = sorted({(p.task_id, i) for p in ds.pairs for i in (p.winner_index, p.loser_index)})
    feats = {p.task_id: p.features for p in ds.pairs}
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["task_id", "bank_index", "implicit_reward", "influence"])
    for task_id, index in samples:
        value = influence(Sample(task_id, index), ds, ckpt.theta, ckpt.theta_ref, train_cfg)
        r = implicit_reward(ckpt.theta, ckpt.theta_ref, feats[task_id], index, train_cfg.beta)
        writer.writerow([task_id, index, repr(r), repr(value)])
    return 0


def cmd_make_tasks(args) -> int:
    save_tasks(planted_tasks(args.simple, args.complex, args.seed), args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoreflow", description="Workflow-bank optimization with score-weighted preference training.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-bank", help="static report for each program in a .flows bank")
    p.add_argument("bank")
    p.add_argument("--config")
    p.set_defaults(func=cmd_validate_bank)

    p = sub.add_parser("run", help="run the optimization loop")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="sweep the pair-weight exponent")
    p.add_argument("--alphas", default="0,2,3,100")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("score", help="evaluate one program on one task")
    p.add_argument("--task", required=True)
    p.add_argument("--program", required=True)
    p.add_argument("--tasks")
    p.add_argument("--config")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("influence", help="per-sample influence for a preference dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bank")
    p.add_argument("--config")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("make-tasks", help="write the planted task set as JSONL")
    p.add_argument("out")
    p.add_argument("--simple", type=int, default=20)
    p.add_argument("--complex", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_tasks)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"scoreflow: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
