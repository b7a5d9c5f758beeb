"""Experiment orchestration: paired baseline/curriculum comparisons across
seeds and per-class training-set sizes, plus report emission.

One comparison *cell* is a (per-class train count, optional fixed T) pair.
Inside a cell every seed runs the full pipeline: generate/split data, train
the baseline, derive T and the epoch budget from it, extract embeddings (and
a confusion matrix when needed) from the baseline's best checkpoint, build
the class distance matrix and hierarchy for that seed, then run every other
requested method under the baseline's epoch budget.  Gains are paired: the
per-seed difference (method - baseline) is computed first and then averaged,
so seed-to-seed difficulty variation cancels.

`summary.json` is byte-deterministic for a fixed config: wall-clock numbers
are confined to the per-run curve CSVs.
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import curriculum, datagen, hierarchy as hier, netcore, similarity
from ._util import (DATA_TEST, METRIC, SPLIT, atomic_write_text, child_seed,
                    fmt9, jsonable, write_json)

METHODS = ("baseline", "continuous", "staged", "multitask", "spl")


class ConfigError(ValueError):
    pass


def _validate_dataset_cfg(dataset: dict):
    kind = dataset.get("kind")
    if kind is None:
        raise ConfigError("dataset.kind is required")
    if kind not in (*datagen.GENERATORS, "cifar", "file"):
        raise ConfigError(f"unknown dataset kind {kind!r}")
    if kind in ("cifar", "file"):
        if "path" not in dataset:
            raise ConfigError(f"dataset kind {kind!r} requires 'path'")
        if not os.path.exists(dataset["path"]):
            raise ConfigError(f"dataset path not found: {dataset['path']}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Everything one `run` needs.  Unknown keys in the source JSON are
    rejected so sweep typos fail loudly."""

    dataset: dict = field(default_factory=dict)  # {"kind": ..., generator or file keys}
    model: dict = None  # {"layers": [...]} or None for the default per data kind
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 0.001})
    methods: tuple = ("baseline", "continuous")
    metric_kind: str = "embedding_dist"
    seeds: tuple = (0, 1, 2, 3, 4)
    train_counts: tuple = (200,)
    t_mode: str = "auto-text"
    t: int = 0  # used when t_mode == "fixed"
    t_sweep: tuple = ()  # sweep axis of fixed curriculum lengths
    val_fraction: float = 0.2
    test_samples_per_class: int = 50
    max_epochs: int = 200
    early_stop_patience: int = 50
    batch_size: int = 512
    spl: dict = field(default_factory=dict)
    out_dir: str = "results"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.train_counts:
            raise ConfigError("train_counts must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; known: {list(METHODS)}")
        if "baseline" not in self.methods:
            raise ConfigError("methods must include 'baseline' (the comparison anchor)")
        if self.metric_kind not in similarity.METRIC_KINDS:
            raise ConfigError(
                f"unknown metric_kind {self.metric_kind!r}; "
                f"known: {list(similarity.METRIC_KINDS)}"
            )
        if self.t_mode not in curriculum.T_MODES:
            raise ConfigError(f"unknown t_mode {self.t_mode!r}")
        _validate_dataset_cfg(self.dataset)


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}; known: {sorted(known)}")
    kwargs = {
        k: tuple(v) if isinstance(v, list) and k in
        ("methods", "seeds", "train_counts", "t_sweep") else v
        for k, v in d.items()
    }
    return ExperimentConfig(**kwargs)


def _layer_from_config(entry) -> netcore.Layer:
    if isinstance(entry, str):
        entry = [entry]
    kind = entry[0]
    makers = {
        "conv3x3": lambda: netcore.conv3x3(int(entry[1])),
        "dense": lambda: netcore.dense(int(entry[1])),
        "relu": netcore.relu,
        "maxpool2x2": netcore.maxpool2x2,
        "flatten": netcore.flatten,
    }
    if kind not in makers:
        raise ConfigError(f"unknown layer {entry!r}")
    if kind in ("conv3x3", "dense") and len(entry) != 2:
        raise ConfigError(f"layer {kind} needs one size argument, got {entry!r}")
    return makers[kind]()


def default_cnn_layers():
    """The small CNN: three 3x3 conv blocks (32, 64, 64 channels), the first
    two followed by 2x2 max pooling, then flatten into the predictor."""
    return (netcore.conv3x3(32), netcore.relu(), netcore.maxpool2x2(),
            netcore.conv3x3(64), netcore.relu(), netcore.maxpool2x2(),
            netcore.conv3x3(64), netcore.relu(), netcore.flatten())


def default_mlp_layers():
    return (netcore.dense(64), netcore.relu())


def build_model_spec(model_cfg, input_shape, num_classes) -> netcore.ModelSpec:
    if model_cfg and "layers" in model_cfg:
        unknown = set(model_cfg) - {"layers"}
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        layers = tuple(_layer_from_config(e) for e in model_cfg["layers"])
    elif len(input_shape) == 3:
        layers = default_cnn_layers()
    else:
        layers = default_mlp_layers()
    try:
        return netcore.ModelSpec(input_shape=input_shape, layers=layers,
                                 num_classes=num_classes)
    except netcore.ShapeError as e:
        raise ConfigError(f"model does not fit the data: {e}") from e


def build_optimizer(opt_cfg: dict) -> netcore.OptimizerState:
    d = dict(opt_cfg or {})
    kind = d.pop("kind", "adam")
    try:
        if kind == "adam":
            return netcore.adam(**d)
        if kind == "sgd":
            return netcore.sgd(**d)
    except TypeError as e:
        raise ConfigError(f"bad optimizer options: {e}") from e
    raise ConfigError(f"unknown optimizer kind {kind!r}")


# ---------------------------------------------------------------------------
# data acquisition per cell
# ---------------------------------------------------------------------------

def _gen_cfg_without_count(dataset_cfg: dict) -> dict:
    d = {k: v for k, v in dataset_cfg.items() if k != "kind"}
    d.pop("samples_per_class", None)
    return d


def _cell_data(cfg, seed: int, count):
    """Train/val/test arrays plus class names for one (seed, count) cell.

    `cfg` is an ExperimentConfig or TrainJobConfig (same dataset fields).
    `count` is the per-class training-set size; None = use the whole file."""
    kind = cfg.dataset["kind"]
    ctag = 0 if count is None else int(count)
    if kind in datagen.GENERATORS:
        gen_cfg = _gen_cfg_without_count(cfg.dataset)
        pool = datagen.generate(kind, {**gen_cfg, "samples_per_class": count},
                                child_seed(seed, SPLIT, ctag))
        test = datagen.generate(
            kind, {**gen_cfg, "samples_per_class": cfg.test_samples_per_class},
            child_seed(seed, DATA_TEST, ctag))
        train, val = datagen.split_and_subsample(
            pool, cfg.val_fraction, None, child_seed(seed, SPLIT, ctag, 1))
    else:
        if kind == "cifar":
            variant = cfg.dataset.get("variant", "cifar10")
            pool = datagen.load_cifar_binary(cfg.dataset["path"], variant)
            test = datagen.load_cifar_binary(cfg.dataset["test_path"], variant) \
                if cfg.dataset.get("test_path") else pool.subset(np.zeros(0, dtype=np.int64))
        else:
            pool = datagen.load_dataset(cfg.dataset["path"])
            test = datagen.load_dataset(cfg.dataset["test_path"]) \
                if cfg.dataset.get("test_path") else pool.subset(np.zeros(0, dtype=np.int64))
        train, val = datagen.split_and_subsample(
            pool, cfg.val_fraction, count, child_seed(seed, SPLIT, ctag, 1))
    splits = curriculum.Splits(
        train_x=train.data, train_y=train.labels,
        val_x=val.data, val_y=val.labels,
        test_x=test.data, test_y=test.labels,
    )
    return splits, train.class_names


# ---------------------------------------------------------------------------
# single training job (the `train` subcommand)
# ---------------------------------------------------------------------------

@dataclass
class TrainJobConfig:
    """One plain fine-label training run producing a reusable checkpoint."""

    dataset: dict = field(default_factory=dict)
    model: dict = None
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 0.001})
    seed: int = 0
    train_count: int = None  # per-class; None = dataset's own size
    val_fraction: float = 0.2
    test_samples_per_class: int = 50
    max_epochs: int = 200
    early_stop_patience: int = 50
    batch_size: int = 512
    out: str = "train_out"

    def __post_init__(self):
        _validate_dataset_cfg(self.dataset)
        if (self.dataset["kind"] in datagen.GENERATORS
                and self.train_count is None
                and "samples_per_class" not in self.dataset):
            raise ConfigError(
                f"generated dataset {self.dataset['kind']!r} needs train_count "
                f"or dataset.samples_per_class")


def train_job_config_from_dict(d: dict) -> TrainJobConfig:
    known = {f.name for f in dataclasses.fields(TrainJobConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}; known: {sorted(known)}")
    return TrainJobConfig(**d)


def run_train_job(cfg: TrainJobConfig, seed_override=None) -> list:
    """Train one baseline model and write model.npz / report.json / curves.csv
    under cfg.out.  Returns the written paths."""
    seed = cfg.seed if seed_override is None else seed_override
    count = cfg.train_count
    if count is None and cfg.dataset["kind"] in datagen.GENERATORS:
        count = cfg.dataset["samples_per_class"]
    splits, class_names = _cell_data(cfg, seed, count)
    spec = build_model_spec(cfg.model, splits.train_x.shape[1:], len(class_names))
    opt = build_optimizer(cfg.optimizer)
    ccfg = curriculum.CurriculumConfig(
        max_epochs=cfg.max_epochs, early_stop_patience=cfg.early_stop_patience,
        batch_size=cfg.batch_size)
    report = curriculum.train_baseline(spec, splits, opt, ccfg, seed)
    os.makedirs(cfg.out, exist_ok=True)
    paths = []
    p = os.path.join(cfg.out, "model.npz")
    save_checkpoint(p, spec, report.best_params, class_names)
    paths.append(p)
    p = os.path.join(cfg.out, "report.json")
    write_json(p, {"config": jsonable(dataclasses.asdict(cfg)), "seed": seed,
                   **curriculum.report_to_dict(report)})
    paths.append(p)
    p = os.path.join(cfg.out, "curves.csv")
    atomic_write_text(p, curriculum.report_curves_csv(report))
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# one cell run
# ---------------------------------------------------------------------------

def _rows_as_lists(report: curriculum.TrainReport) -> list:
    return [[r.epoch, r.level, r.train_acc, r.val_acc, r.val_acc_cluster,
             r.loss, r.seconds] for r in report.rows]


def run_cell(cfg: ExperimentConfig, seed: int, count: int, fixed_t=None) -> dict:
    """Full pipeline for one (seed, train count) grid point.

    Returns plain data (no parameter arrays): per-method stats, curve rows,
    and the hierarchy JSON built from this seed's baseline."""
    splits, class_names = _cell_data(cfg, seed, count)
    spec = build_model_spec(cfg.model, splits.train_x.shape[1:], len(class_names))
    opt = build_optimizer(cfg.optimizer)
    ccfg = curriculum.CurriculumConfig(
        max_epochs=cfg.max_epochs, early_stop_patience=cfg.early_stop_patience,
        batch_size=cfg.batch_size,
        t_mode=cfg.t_mode if fixed_t is None else "fixed",
        t=cfg.t if fixed_t is None else fixed_t,
    )
    out = {"seed": seed, "train_count": count, "methods": {}, "curves": {},
           "failures": {}, "hierarchy_json": None, "t_epochs": None, "budget": None}

    base = curriculum.train_baseline(spec, splits, opt, ccfg, seed)
    budget = base.total_epochs
    out["budget"] = budget
    out["methods"]["baseline"] = _method_stats(base)
    out["curves"]["baseline"] = _rows_as_lists(base)

    needs_hier = any(m in cfg.methods for m in ("continuous", "staged", "multitask"))
    h = None
    if needs_hier:
        if cfg.metric_kind in ("embedding_dist", "embedding_sim"):
            dist = similarity.build_metric(cfg.metric_kind, embeddings=base.best_params.w)
        elif cfg.metric_kind in ("confusion", "confusion_dist"):
            conf = similarity.estimate_confusion(
                spec, base.best_params,
                curriculum.as_model_input(splits.val_x), splits.val_y,
                cfg.batch_size)
            dist = similarity.build_metric(cfg.metric_kind, confusion=conf)
        else:
            dist = similarity.build_metric(
                "random", seed=child_seed(seed, METRIC, count),
                num_classes=spec.num_classes)
        h = hier.affinity_cluster(dist, class_names=list(class_names))
        out["hierarchy_json"] = hier.hierarchy_to_json(h)

    t_epochs = None
    if "continuous" in cfg.methods:
        t_epochs = curriculum.curriculum_length(
            base.val_curve(), ccfg.t_mode,
            ccfg.t if ccfg.t_mode == "fixed" else None)
        out["t_epochs"] = t_epochs

    spl_cfg = None
    if "spl" in cfg.methods:
        spl_cfg = datagen.config_from_dict(curriculum.SplConfig, dict(cfg.spl))

    for method in cfg.methods:
        if method == "baseline":
            continue
        try:
            if method == "continuous":
                rep = curriculum.train_continuous(spec, splits, h, opt, ccfg, seed,
                                                  t_epochs=t_epochs, budget=budget)
            elif method == "staged":
                rep = curriculum.train_staged(spec, splits, h, opt, ccfg, seed)
            elif method == "multitask":
                rep = curriculum.train_multitask(spec, splits, h, opt, ccfg, seed,
                                                 budget=budget)
            else:
                rep = curriculum.train_spl(spec, splits, opt, spl_cfg, ccfg, seed,
                                           budget=budget)
        except (curriculum.DivergenceError, curriculum.CurriculumError,
                netcore.ShapeError) as e:
            out["failures"][method] = f"{type(e).__name__}: {e}"
            continue
        out["methods"][method] = _method_stats(rep)
        out["curves"][method] = _rows_as_lists(rep)
    return out


def _method_stats(report: curriculum.TrainReport) -> dict:
    return {
        "test_acc": report.test_acc,
        "best_val_acc": report.best_val_acc,
        "best_val_epoch": report.best_val_epoch,
        "total_epochs": report.total_epochs,
        "extras": jsonable(report.extras),
    }


def _cell_worker(args):
    cfg_dict, seed, count, fixed_t = args
    cfg = experiment_config_from_dict(cfg_dict)
    return run_cell(cfg, seed, count, fixed_t)


# ---------------------------------------------------------------------------
# experiment = grid of cells + aggregation
# ---------------------------------------------------------------------------

def _stderr(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size <= 1:
        return 0.0
    return float(v.std(ddof=1) / np.sqrt(v.size))


def run_experiment(cfg: ExperimentConfig, fixed_t=None, threads: int = 1) -> dict:
    """Run the (seeds × train_counts) grid and aggregate a ComparisonSummary.

    Per cell: mean/stderr of test accuracy per method, plus paired gains
    (per-seed method-minus-baseline, averaged afterwards).
    """
    grid = [(count, seed) for count in cfg.train_counts for seed in cfg.seeds]
    cfg_dict = jsonable(dataclasses.asdict(cfg))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_cell_worker,
                                [(cfg_dict, s, c, fixed_t) for c, s in grid]))
    else:
        raw = [run_cell(cfg, s, c, fixed_t) for c, s in grid]
    by_cell = {}
    for res in raw:
        by_cell.setdefault(res["train_count"], []).append(res)

    cells = []
    curves = {}
    hierarchies = {}
    for count in cfg.train_counts:
        runs = sorted(by_cell[count], key=lambda r: r["seed"])
        methods_summary = {}
        failures = {}
        for method in cfg.methods:
            per_seed = {}
            gains = {}
            epochs = {}
            for r in runs:
                s = str(r["seed"])
                if method in r["methods"]:
                    st = r["methods"][method]
                    per_seed[s] = st["test_acc"]
                    epochs[s] = st["total_epochs"]
                    if method != "baseline" and "baseline" in r["methods"]:
                        gains[s] = st["test_acc"] - r["methods"]["baseline"]["test_acc"]
                if method in r["failures"]:
                    failures.setdefault(method, {})[s] = r["failures"][method]
            if not per_seed:
                continue
            entry = {
                "per_seed": per_seed,
                "mean": float(np.mean(list(per_seed.values()))),
                "stderr": _stderr(list(per_seed.values())),
                "epochs_per_seed": epochs,
            }
            if method != "baseline":
                entry["gain_per_seed"] = gains
                entry["gain_mean"] = float(np.mean(list(gains.values()))) if gains else None
                entry["gain_stderr"] = _stderr(list(gains.values())) if gains else None
            methods_summary[method] = entry
        cell = {
            "train_count": count,
            "t_fixed": fixed_t,
            "t_per_seed": {str(r["seed"]): r["t_epochs"] for r in runs},
            "budget_per_seed": {str(r["seed"]): r["budget"] for r in runs},
            "methods": methods_summary,
            "failures": failures,
        }
        cells.append(cell)
        for r in runs:
            tag = f"n{count}_seed{r['seed']}"
            if fixed_t is not None:
                tag = f"t{fixed_t}_" + tag
            for method, rows in r["curves"].items():
                curves[f"{tag}_{method}"] = rows
            if r["hierarchy_json"] is not None:
                hierarchies[f"hierarchy_{tag}.json"] = r["hierarchy_json"]

    summary = {
        "schema": "c2f-summary-v1",
        "config": cfg_dict,
        "cells": cells,
    }
    return {"summary": summary, "curves": curves, "hierarchies": hierarchies}


def sweep(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Cartesian product of train_counts × t_sweep; each sweep point runs a
    full experiment at one fixed curriculum length.  An empty t_sweep falls
    back to the configured t_mode (counts remain the only axis)."""
    if not cfg.t_sweep:
        return [run_experiment(cfg, threads=threads)]
    results = []
    for t in cfg.t_sweep:
        results.append(run_experiment(cfg, fixed_t=int(t), threads=threads))
    return results


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

SVG_COLORS = ("#1b6ca8", "#c2342f", "#3a7d44", "#8a5ab5", "#b07d2b")


def _svg_line_chart(series, x_label, y_label, width=640, height=440) -> str:
    """Hand-rolled SVG 1.1 line chart: one <polyline> per named series plus a
    translucent stderr band polygon.  series = [(name, [(x, mean, err)...])]."""
    ml, mr, mt, mb = 64, 16, 40, 48
    pw, ph = width - ml - mr, height - mt - mb
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] + p[2] for _, pts in series for p in pts] + \
         [p[1] - p[2] for _, pts in series for p in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.05, y1 + 0.05
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
              f'width="{width}" height="{height}" '
              f'viewBox="0 0 {width} {height}">\n')
    out.write(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n')
    out.write(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" '
              f'stroke="black" stroke-width="1"/>\n')
    out.write(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" '
              f'stroke="black" stroke-width="1"/>\n')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.write(f'<text x="{sx(xv):.2f}" y="{mt + ph + 18}" font-size="11" '
                  f'text-anchor="middle">{xv:.4g}</text>\n')
        out.write(f'<text x="{ml - 8}" y="{sy(yv):.2f}" font-size="11" '
                  f'text-anchor="end" dominant-baseline="middle">{yv:.3f}</text>\n')
    out.write(f'<text x="{ml + pw / 2:.2f}" y="{height - 10}" font-size="13" '
              f'text-anchor="middle">{x_label}</text>\n')
    out.write(f'<text x="16" y="{mt + ph / 2:.2f}" font-size="13" text-anchor="middle" '
              f'transform="rotate(-90 16 {mt + ph / 2:.2f})">{y_label}</text>\n')
    for i, (name, pts) in enumerate(series):
        color = SVG_COLORS[i % len(SVG_COLORS)]
        if pts:
            band = [(sx(x), sy(m + e)) for x, m, e in pts]
            band += [(sx(x), sy(m - e)) for x, m, e in reversed(pts)]
            bstr = " ".join(f"{a:.2f},{b:.2f}" for a, b in band)
            out.write(f'<polygon points="{bstr}" fill="{color}" fill-opacity="0.15" '
                      f'stroke="none"/>\n')
        pstr = " ".join(f"{sx(x):.2f},{sy(m):.2f}" for x, m, _ in pts)
        out.write(f'<polyline id="line-{name}" points="{pstr}" fill="none" '
                  f'stroke="{color}" stroke-width="2"/>\n')
        ly = mt + 16 + 16 * i
        out.write(f'<line x1="{ml + pw - 130}" y1="{ly}" x2="{ml + pw - 106}" y2="{ly}" '
                  f'stroke="{color}" stroke-width="2"/>\n')
        out.write(f'<text x="{ml + pw - 100}" y="{ly + 4}" font-size="12">{name}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def accuracy_svg(summaries) -> str:
    """Mean test accuracy vs the sweep axis (train count, or fixed T when
    sweeping curriculum lengths), one line per method with stderr bands."""
    if isinstance(summaries, dict):
        summaries = [summaries]
    cells = [c for s in summaries for c in s["cells"]]
    sweep_t = len({c["t_fixed"] for c in cells}) > 1
    methods = []
    for c in cells:
        for m in c["methods"]:
            if m not in methods:
                methods.append(m)
    series = []
    for m in methods:
        pts = []
        for c in cells:
            if m not in c["methods"]:
                continue
            x = c["t_fixed"] if sweep_t else c["train_count"]
            pts.append((float(x), c["methods"][m]["mean"], c["methods"][m]["stderr"]))
        pts.sort(key=lambda p: p[0])
        series.append((m, pts))
    x_label = "curriculum length T" if sweep_t else "training samples per class"
    return _svg_line_chart(series, x_label, "test accuracy")


def summary_csv(summaries) -> str:
    """One row per method × cell: mean, stderr, gain, gain stderr (9 sig
    digits; gain columns empty for the baseline)."""
    if isinstance(summaries, dict):
        summaries = [summaries]
    lines = ["train_count,t,method,mean_test_acc,stderr,gain_mean,gain_stderr"]
    for s in summaries:
        for c in s["cells"]:
            t = "" if c["t_fixed"] is None else str(c["t_fixed"])
            for m, st in c["methods"].items():
                gm = "" if st.get("gain_mean") is None else fmt9(st["gain_mean"])
                gs = "" if st.get("gain_stderr") is None else fmt9(st["gain_stderr"])
                lines.append(",".join([
                    str(c["train_count"]), t, m, fmt9(st["mean"]),
                    fmt9(st["stderr"]), gm, gs,
                ]))
    return "\n".join(lines) + "\n"


def emit_reports(result, out_dir) -> list:
    """Write summary.json / summary.csv / curves/*.csv / accuracy.svg /
    hierarchies/*.json for one experiment result.  Returns written paths."""
    os.makedirs(os.path.join(out_dir, "curves"), exist_ok=True)
    written = []

    def emit(relpath, text):
        path = os.path.join(out_dir, relpath)
        atomic_write_text(path, text)
        written.append(path)

    write_json(os.path.join(out_dir, "summary.json"), result["summary"])
    written.append(os.path.join(out_dir, "summary.json"))
    emit("summary.csv", summary_csv(result["summary"]))
    emit("accuracy.svg", accuracy_svg(result["summary"]))
    for name, rows in sorted(result["curves"].items()):
        lines = [curriculum.CURVE_HEADER]
        for row in rows:
            lines.append(",".join(
                [str(row[0]), str(row[1])] + [fmt9(v) for v in row[2:]]))
        emit(os.path.join("curves", f"{name}.csv"), "\n".join(lines) + "\n")
    if result["hierarchies"]:
        os.makedirs(os.path.join(out_dir, "hierarchies"), exist_ok=True)
        for name, text in sorted(result["hierarchies"].items()):
            emit(os.path.join("hierarchies", name), text)
    return written


def emit_sweep(results, out_dir) -> list:
    """Write one subdirectory per sweep point plus combined summary/figure."""
    written = []
    all_summaries = []
    for i, res in enumerate(results):
        t = res["summary"]["cells"][0]["t_fixed"] if res["summary"]["cells"] else None
        sub = os.path.join(out_dir, f"sweep_t{t}" if t is not None else f"sweep_{i}")
        os.makedirs(sub, exist_ok=True)
        written += emit_reports(res, sub)
        all_summaries.append(res["summary"])
    write_json(os.path.join(out_dir, "sweep.json"), {"points": all_summaries})
    written.append(os.path.join(out_dir, "sweep.json"))
    atomic_write_text(os.path.join(out_dir, "summary.csv"), summary_csv(all_summaries))
    written.append(os.path.join(out_dir, "summary.csv"))
    atomic_write_text(os.path.join(out_dir, "accuracy.svg"), accuracy_svg(all_summaries))
    written.append(os.path.join(out_dir, "accuracy.svg"))
    return written


# ---------------------------------------------------------------------------
# model checkpoints (CLI train/hierarchy round-trip)
# ---------------------------------------------------------------------------

def save_checkpoint(path, spec: netcore.ModelSpec, params: netcore.ModelParams,
                    class_names=None):
    arrays = {name.replace(".", "_"): arr for name, arr in netcore.param_items(params)}
    header = {
        "input_shape": list(spec.input_shape),
        "layers": [[l.kind, l.units] for l in spec.layers],
        "num_classes": spec.num_classes,
        "class_names": list(class_names) if class_names else None,
    }
    arrays["header_json"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path):
    with np.load(path) as z:
        header = json.loads(bytes(z["header_json"]).decode("utf-8"))
        layers = tuple(
            netcore.Layer(kind, int(units)) for kind, units in header["layers"])
        spec = netcore.ModelSpec(
            input_shape=tuple(header["input_shape"]), layers=layers,
            num_classes=int(header["num_classes"]))
        params = netcore.init_params(spec, 0)
        for i, lp in enumerate(params.encoder):
            for k in lp:
                lp[k] = z[f"enc{i}_{k}"]
        params.w = z["pred_w"]
        params.b = z["pred_b"]
    return spec, params, header.get("class_names")
