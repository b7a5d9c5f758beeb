"""Command-line front end.

Subcommands: gen-data, train, hierarchy, run, sweep.  Configs are UTF-8
JSON; unknown keys are rejected.  Exit codes: 0 success, 1 validation error
(bad flags, bad config, missing/invalid input files), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import curriculum, datagen, harness, hierarchy, netcore, similarity
from ._util import write_json


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on bad usage (validation), not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise harness.ConfigError(f"{path}: top-level JSON value must be an object")
    return obj


def _cmd_gen_data(args) -> int:
    if args.kind == "cifar":
        cfg = _load_json(args.config) if args.config else {}
        known = {"path", "variant"}
        unknown = set(cfg) - known
        if unknown:
            raise harness.ConfigError(f"unknown cifar config keys: {sorted(unknown)}")
        if "path" not in cfg:
            raise harness.ConfigError("cifar gen-data config needs a 'path' key")
        ds = datagen.load_cifar_binary(cfg["path"], cfg.get("variant", "cifar10"))
    else:
        cfg = _load_json(args.config) if args.config else {}
        ds = datagen.generate(args.kind, cfg, args.seed)
    datagen.save_dataset(ds, args.out)
    print(f"wrote {args.out}: {len(ds)} samples, {ds.num_classes} classes")
    return 0


def _cmd_train(args) -> int:
    cfg = harness.train_job_config_from_dict(_load_json(args.config))
    paths = harness.run_train_job(cfg, seed_override=args.seed if args.seed_set else None)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_hierarchy(args) -> int:
    names = None
    if args.matrix:
        dist = similarity.load_matrix_csv(args.matrix)
    else:
        if not args.model:
            raise harness.ConfigError("hierarchy needs --model (or --matrix)")
        spec, params, names = harness.load_checkpoint(args.model)
        if args.metric in ("embedding_dist", "embedding_sim"):
            dist = similarity.build_metric(args.metric, embeddings=params.w)
        elif args.metric in ("confusion", "confusion_dist"):
            if not args.data:
                raise harness.ConfigError(
                    f"metric {args.metric} needs --data (a dataset to estimate "
                    f"the confusion matrix on)")
            ds = datagen.load_dataset(args.data)
            conf = similarity.estimate_confusion(
                spec, params, curriculum.as_model_input(ds.data), ds.labels)
            dist = similarity.build_metric(args.metric, confusion=conf)
        else:
            dist = similarity.build_metric("random", seed=args.seed,
                                           num_classes=spec.num_classes)
    h = hierarchy.affinity_cluster(dist, class_names=names)
    hierarchy.save_hierarchy(h, args.out)
    sizes = [len(level) for level in h.levels]
    print(f"wrote {args.out}: {h.num_levels} levels, cluster counts {sizes}")
    return 0


def _cmd_run(args) -> int:
    cfg = harness.experiment_config_from_dict(_load_json(args.config))
    result = harness.run_experiment(cfg, threads=args.threads)
    out = args.out or cfg.out_dir
    harness.emit_reports(result, out)
    print(f"wrote {out}/summary.json")
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.experiment_config_from_dict(_load_json(args.config))
    results = harness.sweep(cfg, threads=args.threads)
    out = args.out or cfg.out_dir
    harness.emit_sweep(results, out)
    print(f"wrote {out}/sweep.json ({len(results)} sweep points)")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="coarse2fine",
                description="Coarse-to-fine curriculum learning toolkit")
    p.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="deterministic mode (default on; all reductions here "
                        "are fixed-order numpy ops, so this is informational)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for independent runs (default 1)")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="generate or ingest a dataset")
    g.add_argument("--kind", required=True,
                   choices=[*datagen.GENERATORS, "cifar"])
    g.add_argument("--config", help="JSON generator config (optional)")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="train one model from a config")
    t.add_argument("--config", required=True)
    t.set_defaults(fn=_cmd_train)

    h = sub.add_parser("hierarchy", help="build a class hierarchy from a model")
    h.add_argument("--model", help="checkpoint from `train` (.npz)")
    h.add_argument("--metric", default="embedding_dist",
                   choices=list(similarity.METRIC_KINDS))
    h.add_argument("--data", help="dataset file for confusion-based metrics")
    h.add_argument("--matrix", help="inject a distance matrix CSV instead of a model")
    h.add_argument("--out", required=True)
    h.set_defaults(fn=_cmd_hierarchy)

    r = sub.add_parser("run", help="run a comparison experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (default: config out_dir)")
    r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("sweep", help="sweep curriculum lengths / train counts")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (default: config out_dir)")
    s.set_defaults(fn=_cmd_sweep)
    return p


_VALIDATION_ERRORS = (
    harness.ConfigError,
    datagen.DatasetError,
    hierarchy.HierarchyError,
    similarity.MetricError,
    curriculum.CurriculumError,
    netcore.ShapeError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.seed_set = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except _VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
