"""Command-line entry point: stats, train, eval, gradcheck, synth.

Exit codes: 0 success, 1 check/metric failure, 2 usage or config error.
Every run writes a manifest capturing the resolved configuration, dataset
checksum, seed and timestamps, sufficient to re-launch it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .checkpoint import load_checkpoint
from .evaluator import evaluate
from .gradcheck import run_suite
from .kg import LoadError, dataset_stats, load_dataset
from .synth import generate_synthetic
from .trainer import TrainConfig, run_training, train_config_from_dict, train_config_to_dict
from .model import variant_label

USAGE_ERROR = 2
CHECK_FAILURE = 1


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def dataset_checksum(dir_path: str) -> str:
    h = hashlib.sha256()
    for name in sorted(os.listdir(dir_path)):
        path = os.path.join(dir_path, name)
        if os.path.isfile(path):
            h.update(name.encode())
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def write_manifest(path: str, command: str, config: dict, dataset_dir: str | None,
                   seed: int | None, started: str, finished: str | None = None,
                   extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "dataset_checksum": dataset_checksum(dataset_dir) if dataset_dir else None,
        "seed": seed,
        "version": f"tglink-{__version__}",
        "started": started,
        "finished": finished,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_stats(args) -> int:
    try:
        graph, splits = load_dataset(args.dataset, args.regime)
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    stats = dataset_stats(graph, splits)
    out = {split: dataclasses.asdict(s) for split, s in stats.items()}
    out["total_entities"] = graph.num_entities
    out["total_relations"] = graph.num_relations
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _load_train_config(args) -> TrainConfig:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    if args.seed is not None:
        raw["seed"] = args.seed
    return train_config_from_dict(raw)


def cmd_train(args) -> int:
    try:
        config = _load_train_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    if not os.path.isdir(args.dataset):
        print(f"error: missing dataset directory: {args.dataset}", file=sys.stderr)
        return USAGE_ERROR
    os.makedirs(args.out, exist_ok=True)
    manifest_path = os.path.join(args.out, "run_manifest.json")
    started = _utcnow()
    cfg_dict = train_config_to_dict(config)
    extra = {"variant": variant_label(config.model)}
    write_manifest(manifest_path, "train", cfg_dict, args.dataset, config.seed,
                   started, extra=extra)
    try:
        summary = run_training(config, args.dataset, args.out)
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    write_manifest(manifest_path, "train", cfg_dict, args.dataset, config.seed,
                   started, finished=_utcnow(), extra={**extra, "summary": summary})
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_eval(args) -> int:
    if not os.path.isdir(args.dataset):
        print(f"error: missing dataset directory: {args.dataset}", file=sys.stderr)
        return USAGE_ERROR
    if not os.path.isfile(os.path.join(args.checkpoint, "manifest.json")):
        print(f"error: no checkpoint manifest in {args.checkpoint}", file=sys.stderr)
        return USAGE_ERROR
    try:
        graph, splits = load_dataset(args.dataset, args.regime)
        model, _, manifest = load_checkpoint(args.checkpoint, graph)
    except (LoadError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    from .text_encoder import build_vocab
    rebuilt = build_vocab(graph, splits.train_entities)
    if rebuilt.token_to_id != model.vocab.token_to_id:
        print("error: checkpoint vocabulary does not match this dataset",
              file=sys.stderr)
        return USAGE_ERROR
    train_cfg = manifest.get("train_config", {})
    cap = args.neighbour_cap or train_cfg.get("neighbour_cap", 10)
    seed = args.seed if args.seed is not None else train_cfg.get("seed", 0)
    report = evaluate(model, graph, splits, args.phase, neighbour_cap=cap,
                      seed=seed, candidates_cap=args.candidates_cap)
    csv_path = os.path.join(args.checkpoint, f"eval_{args.phase}.csv")
    report.write_csv(csv_path)
    print(report.to_json())
    return 0


def cmd_gradcheck(args) -> int:
    started = time.perf_counter()
    results = run_suite(seed=args.seed or 0)
    report = {
        "ops": [{"name": r.name, "max_rel_err": r.max_rel_err, "pass": r.passed}
                for r in results],
        "passed": all(r.passed for r in results),
        "seconds": time.perf_counter() - started,
    }
    print(json.dumps(report, sort_keys=True, indent=2))
    if not report["passed"]:
        first = next(r for r in results if not r.passed)
        print(f"gradcheck failed at {first.name}: max relative error "
              f"{first.max_rel_err:.3e}", file=sys.stderr)
        return CHECK_FAILURE
    return 0


def cmd_synth(args) -> int:
    try:
        out = generate_synthetic(args.task, args.n, args.seed or 0, args.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    manifest_path = os.path.join(out, "run_manifest.json")
    write_manifest(manifest_path, "synth",
                   {"task": args.task, "n": args.n}, None, args.seed or 0,
                   _utcnow(), finished=_utcnow())
    print(json.dumps({"out": out, "task": args.task, "n": args.n},
                     sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tglink",
        description="Inductive knowledge-graph link prediction from text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="print dataset statistics as JSON")
    p.add_argument("dataset")
    p.add_argument("--regime", choices=["dynamic", "transfer"], default="transfer")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("dataset")
    p.add_argument("out")
    p.add_argument("--config", help="JSON config file (see README for the schema)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--phase", choices=["valid", "test"], default="test")
    p.add_argument("--regime", choices=["dynamic", "transfer"], default="transfer")
    p.add_argument("--candidates-cap", type=int, dest="candidates_cap")
    p.add_argument("--neighbour-cap", type=int, dest="neighbour_cap")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--task", choices=["text", "structure"], required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
