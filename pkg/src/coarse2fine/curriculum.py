"""Coarse-to-fine curriculum training.

The classifier always has K outputs.  A coarse level does not shrink the
head; it changes the *loss*: the marginalized cross-entropy scores the total
softmax probability of the true class's cluster, so the model is only asked
to put mass on the right cluster.  Training walks the hierarchy coarsest to
finest and finishes with plain cross-entropy on the original labels.

Every trainer here (baseline, continuous, staged, multitask, SPL) runs
through one shared phase loop, so a degenerate curriculum (singleton-only
hierarchy, or T=0) reproduces the baseline bit for bit under the same seed.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import netcore
from ._util import SHUFFLE, STAGE_BASE, child_rng, child_seed, fmt9, round_half_away


class CurriculumError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Raised when a training loss goes non-finite; harness records the run
    as failed."""


# ---------------------------------------------------------------------------
# label transformation and the marginalized loss
# ---------------------------------------------------------------------------

def cluster_index_map(clusters, num_classes: int) -> np.ndarray:
    """classId -> clusterIndex array for a partition given as cluster lists."""
    m = np.full(num_classes, -1, dtype=np.int64)
    total = 0
    for ci, cluster in enumerate(clusters):
        for k in cluster:
            if not 0 <= k < num_classes:
                raise CurriculumError(f"class id {k} outside [0, {num_classes})")
            if m[k] != -1:
                raise CurriculumError(f"class id {k} appears in two clusters")
            m[k] = ci
            total += 1
    if total != num_classes:
        raise CurriculumError("clusters do not cover every class")
    return m


def transform_labels(labels, clusters) -> np.ndarray:
    """Replace each label with the index of the cluster containing it."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.astype(np.int64)
    k = int(labels.max()) + 1
    total = sum(len(c) for c in clusters)
    m = cluster_index_map(clusters, max(k, total))
    return m[labels]


def marginalized_cross_entropy(logits, labels, cluster_map):
    """Mean marginalized CE and its logit gradient.

    Per-sample loss = logsumexp(all logits) - logsumexp(logits of the classes
    sharing the sample's cluster): the negative log of the summed softmax
    probability of the true cluster.  dlogits_j =
    (softmax_all_j - [j in cluster] * softmax_within_j) / N.

    Degenerate cases fall out exactly: singleton clusters reproduce plain CE
    bit for bit (same logsumexp helper), and a single all-class cluster gives
    exactly zero loss and gradient.
    """
    z = np.asarray(logits)
    y = np.asarray(labels)
    cm = np.asarray(cluster_map)
    n, k = z.shape
    if cm.shape != (k,):
        raise CurriculumError(f"cluster map covers {cm.shape[0]} classes, logits have {k}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise CurriculumError(f"labels out of range [0, {k})")
    lse_all = netcore.logsumexp_rows(z)
    mask = cm[None, :] == cm[y][:, None]
    zin = np.where(mask, z, -np.inf)
    lse_in = netcore.logsumexp_rows(zin)
    losses = lse_all - lse_in
    p_all = np.exp(z - lse_all[:, None])
    p_in = np.exp(zin - lse_in[:, None])  # exp(-inf) = 0 outside the cluster
    dlogits = (p_all - p_in) / n
    return float(losses.mean()), dlogits.astype(z.dtype, copy=False)


def _per_sample_ce(logits, labels):
    """Per-sample CE losses and softmax probabilities (shared arithmetic
    with softmax_cross_entropy, needed by SPL's sample selection)."""
    z = np.asarray(logits)
    y = np.asarray(labels)
    lse = netcore.logsumexp_rows(z)
    losses = lse - z[np.arange(z.shape[0]), y]
    p = np.exp(z - lse[:, None])
    return losses, p


# ---------------------------------------------------------------------------
# curriculum length heuristic
# ---------------------------------------------------------------------------

T_MODES = ("auto-text", "auto-alg3", "fixed")


def curriculum_length(val_acc_per_epoch, t_mode: str = "auto-text", fixed_t=None) -> int:
    """Total coarse-phase epochs T derived from a baseline validation curve.

    auto-text: first (1-based) epoch reaching 90% of the curve's best value.
    auto-alg3: round(0.9 * argmax epoch), argmax 1-based, halves away from 0.
    fixed: take ``fixed_t`` as is.
    """
    if t_mode == "fixed":
        if fixed_t is None or fixed_t < 0:
            raise CurriculumError("fixed t_mode needs fixed_t >= 0")
        return int(fixed_t)
    curve = np.asarray(val_acc_per_epoch, dtype=np.float64)
    if curve.size == 0:
        raise CurriculumError("empty validation curve")
    if t_mode == "auto-text":
        return int(np.argmax(curve >= 0.9 * curve.max())) + 1
    if t_mode == "auto-alg3":
        best_epoch = int(np.argmax(curve)) + 1
        return round_half_away(0.9 * best_epoch)
    raise CurriculumError(f"unknown t_mode {t_mode!r}; expected one of {T_MODES}")


def split_epochs(t: int, num_coarse: int) -> list:
    """Allocate T coarse epochs: round(T / numCoarse) per level (clamped to
    what is still unspent), with the remainder absorbed by the last level,
    so the allocations always sum to exactly T."""
    if num_coarse < 1:
        raise CurriculumError("need at least one coarse level to split over")
    if t < 0:
        raise CurriculumError("T must be >= 0")
    per = round_half_away(t / num_coarse)
    out = []
    left = t
    for _ in range(num_coarse - 1):
        take = min(per, left)
        out.append(take)
        left -= take
    out.append(left)
    return out


# ---------------------------------------------------------------------------
# configuration and reports
# ---------------------------------------------------------------------------

@dataclass
class CurriculumConfig:
    """Training protocol knobs shared by all trainers."""

    mode: str = "continuous"  # continuous | staged
    t: int = 0  # total coarse epochs (used when t_mode == "fixed")
    t_mode: str = "auto-text"
    max_epochs: int = 200
    early_stop_patience: int = 50
    batch_size: int = 512

    def __post_init__(self):
        if self.mode not in ("continuous", "staged"):
            raise CurriculumError(f"unknown mode {self.mode!r}")
        if self.t_mode not in T_MODES:
            raise CurriculumError(f"unknown t_mode {self.t_mode!r}")
        if self.t < 0 or self.max_epochs < 0:
            raise CurriculumError("t and max_epochs must be >= 0")
        if self.batch_size < 1:
            raise CurriculumError("batch_size must be >= 1")


@dataclass
class EpochRow:
    epoch: int  # 1-based, global across phases
    level: int
    train_acc: float
    val_acc: float
    val_acc_cluster: float
    loss: float
    seconds: float


@dataclass
class TrainReport:
    rows: list
    best_val_epoch: int  # 0 when no epoch ran
    best_val_acc: float
    test_acc: float  # test accuracy at the best-validation checkpoint
    wall_seconds: float
    params: netcore.ModelParams  # final
    best_params: netcore.ModelParams
    extras: dict = field(default_factory=dict)

    @property
    def total_epochs(self) -> int:
        return len(self.rows)

    def val_curve(self) -> list:
        return [r.val_acc for r in self.rows]


CURVE_HEADER = "epoch,level,train_acc,val_acc,val_acc_cluster,loss,seconds"


def report_curves_csv(report: TrainReport) -> str:
    lines = [CURVE_HEADER]
    for r in report.rows:
        lines.append(",".join([
            str(r.epoch), str(r.level), fmt9(r.train_acc), fmt9(r.val_acc),
            fmt9(r.val_acc_cluster), fmt9(r.loss), fmt9(r.seconds),
        ]))
    return "\n".join(lines) + "\n"


def report_to_dict(report: TrainReport, include_timing: bool = True) -> dict:
    """JSON-ready view of a report (parameters excluded)."""
    out = {
        "best_val_epoch": report.best_val_epoch,
        "best_val_acc": report.best_val_acc,
        "test_acc": report.test_acc,
        "total_epochs": report.total_epochs,
        "epochs": [
            {
                "epoch": r.epoch, "level": r.level, "train_acc": r.train_acc,
                "val_acc": r.val_acc, "val_acc_cluster": r.val_acc_cluster,
                "loss": r.loss,
            }
            | ({"seconds": r.seconds} if include_timing else {})
            for r in report.rows
        ],
        "extras": report.extras,
    }
    if include_timing:
        out["wall_seconds"] = report.wall_seconds
    return out


# ---------------------------------------------------------------------------
# the shared phase loop
# ---------------------------------------------------------------------------

@dataclass
class _Phase:
    kind: str  # "ce" | "marginal" | "multitask" | "spl"
    level: int
    max_epochs: int
    early_stop: bool
    cmap: np.ndarray = None  # marginal loss map; also scores val_acc_cluster
    maps: tuple = ()  # multitask: the coarse-level maps
    report_map: np.ndarray = None  # staged: score val_acc_cluster on a coarser task


@dataclass
class _SplState:
    lam: float
    growth: float
    warmup: int
    epoch: int = 0
    selected_frac: list = field(default_factory=list)
    lam_curve: list = field(default_factory=list)
    fallback_batches: int = 0  # batches where no loss beat lambda


def _batch_step(phase, logits, yb, spl):
    """Loss value and dlogits for one batch under the phase's loss."""
    if phase.kind == "ce":
        return netcore.softmax_cross_entropy(logits, yb)
    if phase.kind == "marginal":
        return marginalized_cross_entropy(logits, yb, phase.cmap)
    if phase.kind == "multitask":
        loss, dlogits = netcore.softmax_cross_entropy(logits, yb)
        for m in phase.maps:
            l2, d2 = marginalized_cross_entropy(logits, yb, m)
            loss += l2
            dlogits = dlogits + d2
        return loss, dlogits
    if phase.kind == "spl":
        losses, p = _per_sample_ce(logits, yb)
        if spl.epoch <= spl.warmup:
            sel = np.ones(len(yb), dtype=bool)
        else:
            sel = losses < spl.lam
            if not sel.any():
                sel = np.ones(len(yb), dtype=bool)  # documented fallback
                spl.fallback_batches += 1
        nsel = int(sel.sum())
        dlogits = p.copy()
        dlogits[np.arange(len(yb)), yb] -= 1
        dlogits[~sel] = 0
        dlogits /= nsel
        spl.selected_frac.append(nsel / len(yb))
        return float(losses[sel].mean()), dlogits.astype(np.asarray(logits).dtype, copy=False)
    raise CurriculumError(f"unknown phase kind {phase.kind!r}")


def _run_phases(spec, splits, opt_template, cfg, seed, phases, *,
                params=None, rng=None, spl=None):
    """Train through a list of phases with one parameter vector.

    Optimizer state is reset at every phase boundary; the validation-best
    checkpoint is tracked across all phases and the test accuracy is
    evaluated once, at that checkpoint.
    """
    t_start = time.perf_counter()
    train_x = as_model_input(splits.train_x)
    val_x = as_model_input(splits.val_x)
    test_x = as_model_input(splits.test_x)
    if train_x.shape[0] == 0:
        raise CurriculumError("empty training split")
    if val_x.shape[0] == 0:
        raise CurriculumError("empty validation split")
    if params is None:
        params = netcore.init_params(spec, seed)
    if rng is None:
        rng = child_rng(seed, SHUFFLE)
    rows = []
    best_acc = -np.inf
    best_epoch = 0
    best_params = netcore.clone_params(params)
    epoch = 0
    n = train_x.shape[0]
    for phase in phases:
        state = opt_template.fresh()
        no_improve = 0
        for _ in range(phase.max_epochs):
            e_start = time.perf_counter()
            epoch += 1
            if spl is not None:
                spl.epoch = epoch
            perm = rng.permutation(n)
            loss_sum = 0.0
            hits = 0
            for s in range(0, n, cfg.batch_size):
                idx = perm[s : s + cfg.batch_size]
                logits, cache = netcore.forward(spec, params, train_x[idx], want_cache=True)
                loss, dlogits = _batch_step(phase, logits, splits.train_y[idx], spl)
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}")
                grads = netcore.backward(spec, params, cache, dlogits)
                netcore.apply_gradients(params, grads, state)
                loss_sum += loss * len(idx)
                hits += int((netcore.predict(logits) == splits.train_y[idx]).sum())
            if spl is not None and epoch > spl.warmup:
                spl.lam *= spl.growth
            if spl is not None:
                spl.lam_curve.append(spl.lam)
            val_acc = netcore.evaluate(spec, params, val_x, splits.val_y, cfg.batch_size)
            if phase.cmap is not None:
                preds = _predict_all(spec, params, val_x, cfg.batch_size)
                val_acc_cluster = float(
                    (phase.cmap[preds] == phase.cmap[splits.val_y]).mean())
            elif phase.report_map is not None:
                preds = _predict_all(spec, params, val_x, cfg.batch_size)
                val_acc_cluster = float(
                    (phase.report_map[preds] == phase.report_map[splits.val_y]).mean())
            else:
                val_acc_cluster = val_acc
            if val_acc > best_acc:
                best_acc = val_acc
                best_epoch = epoch
                best_params = netcore.clone_params(params)
                no_improve = 0
            else:
                no_improve += 1
            rows.append(EpochRow(
                epoch=epoch, level=phase.level, train_acc=hits / n,
                val_acc=val_acc, val_acc_cluster=val_acc_cluster,
                loss=loss_sum / n, seconds=time.perf_counter() - e_start,
            ))
            if phase.early_stop and no_improve >= cfg.early_stop_patience:
                break
    test_acc = netcore.evaluate(spec, best_params, test_x, splits.test_y, cfg.batch_size)
    return TrainReport(
        rows=rows,
        best_val_epoch=best_epoch,
        best_val_acc=float(best_acc) if rows else float("nan"),
        test_acc=test_acc,
        wall_seconds=time.perf_counter() - t_start,
        params=params,
        best_params=best_params,
    )


def _predict_all(spec, params, x, batch_size):
    preds = [
        netcore.predict(netcore.forward(spec, params, x[s : s + batch_size])[0])
        for s in range(0, x.shape[0], batch_size)
    ]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def as_model_input(x):
    """uint8 images -> [0,1] float32; anything else -> float32 unchanged."""
    x = np.asarray(x)
    if x.dtype == np.uint8:
        return x.astype(np.float32) / np.float32(255.0)
    return x.astype(np.float32, copy=False)


@dataclass
class Splits:
    """Arrays for one training cell.  ``*_y`` are fine labels except when a
    staged stage passes relabeled copies."""

    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def _levels_of(hierarchy):
    levels = hierarchy.levels if hasattr(hierarchy, "levels") else list(hierarchy)
    if not levels:
        raise CurriculumError("hierarchy has no levels")
    return levels


def _check_hierarchy(levels, num_classes):
    bottom = levels[-1]
    if sorted(map(tuple, bottom)) != [(k,) for k in range(num_classes)]:
        raise CurriculumError(
            "hierarchy bottom level must be the singleton classes of this dataset"
        )


# ---------------------------------------------------------------------------
# trainers
# ---------------------------------------------------------------------------

def train_baseline(spec, splits, opt, cfg: CurriculumConfig, seed: int) -> TrainReport:
    """Plain softmax-CE training with early stopping."""
    phases = [_Phase("ce", level=0, max_epochs=cfg.max_epochs, early_stop=True)]
    return _run_phases(spec, splits, opt, cfg, seed, phases)


def train_continuous(spec, splits, hierarchy, opt, cfg: CurriculumConfig, seed: int,
                     t_epochs: int, budget=None) -> TrainReport:
    """One parameter vector trained through the hierarchy levels in order.

    Coarse levels get a fixed share of ``t_epochs`` under the marginalized
    loss; the final level trains with plain CE and early stopping.  The total
    never exceeds ``budget`` (typically the baseline's realized epochs), so
    comparisons are equal-budget.
    """
    levels = _levels_of(hierarchy)
    _check_hierarchy(levels, spec.num_classes)
    cap = cfg.max_epochs if budget is None else min(cfg.max_epochs, int(budget))
    num_coarse = len(levels) - 1
    if num_coarse == 0 or t_epochs == 0:
        alloc = [0] * num_coarse
    else:
        alloc = split_epochs(int(t_epochs), num_coarse)
    phases = []
    spent = 0
    for li in range(num_coarse):
        e = min(alloc[li], cap - spent)
        cmap = cluster_index_map(levels[li], spec.num_classes)
        phases.append(_Phase("marginal", level=li, max_epochs=e, early_stop=False,
                             cmap=cmap))
        spent += e
    phases.append(_Phase("ce", level=len(levels) - 1, max_epochs=cap - spent,
                         early_stop=True))
    report = _run_phases(spec, splits, opt, cfg, seed, phases)
    report.extras = {
        "t_epochs": int(t_epochs),
        "epoch_split": [p.max_epochs for p in phases[:-1]],
        "budget": cap,
    }
    return report


def train_multitask(spec, splits, hierarchy, opt, cfg: CurriculumConfig, seed: int,
                    budget=None) -> TrainReport:
    """Every batch minimizes the unweighted sum of all level losses (the
    final level contributes plain CE)."""
    levels = _levels_of(hierarchy)
    _check_hierarchy(levels, spec.num_classes)
    cap = cfg.max_epochs if budget is None else min(cfg.max_epochs, int(budget))
    maps = tuple(cluster_index_map(lev, spec.num_classes) for lev in levels[:-1])
    phases = [_Phase("multitask", level=len(levels) - 1, max_epochs=cap,
                     early_stop=True, maps=maps)]
    report = _run_phases(spec, splits, opt, cfg, seed, phases)
    report.extras = {"num_levels": len(levels), "budget": cap}
    return report


@dataclass
class SplConfig:
    initial_lambda: float = 1.0
    growth_factor: float = 1.1
    warmup_epochs: int = 5

    def __post_init__(self):
        if self.initial_lambda <= 0:
            raise CurriculumError("initial_lambda must be > 0")
        if self.growth_factor < 1:
            raise CurriculumError("growth_factor must be >= 1")
        if self.warmup_epochs < 0:
            raise CurriculumError("warmup_epochs must be >= 0")


def train_spl(spec, splits, opt, spl_cfg: SplConfig, cfg: CurriculumConfig, seed: int,
              budget=None) -> TrainReport:
    """Self-paced baseline: after warmup, only samples with CE loss below a
    threshold lambda contribute; lambda grows each epoch.  An all-zero
    selection falls back to the full batch."""
    cap = cfg.max_epochs if budget is None else min(cfg.max_epochs, int(budget))
    spl = _SplState(lam=float(spl_cfg.initial_lambda),
                    growth=float(spl_cfg.growth_factor),
                    warmup=int(spl_cfg.warmup_epochs))
    phases = [_Phase("spl", level=0, max_epochs=cap, early_stop=True)]
    report = _run_phases(spec, splits, opt, cfg, seed, phases, spl=spl)
    report.extras = {
        "lambda_final": spl.lam,
        "lambda_curve": spl.lam_curve,
        "selected_frac_batches": spl.selected_frac,
        "fallback_batches": spl.fallback_batches,
        "budget": cap,
    }
    return report


def train_staged(spec, splits, hierarchy, opt, cfg: CurriculumConfig, seed: int) -> TrainReport:
    """Per-level models: each stage trains a fresh predictor over that
    level's clusters on relabeled data, with the encoder carried over from
    the end of the previous stage.  Every stage early-stops on its own
    validation accuracy ("train until convergence"), so staged is exempt
    from the equal-budget cap; the reported best/test numbers come from the
    final (fine) stage only.  ``val_acc_cluster`` for stage l scores the
    stage's predictions on the coarser stage l-1 task, which is what makes
    cross-stage transfer visible in the curves."""
    levels = _levels_of(hierarchy)
    _check_hierarchy(levels, spec.num_classes)
    rows = []
    stage_epochs = []
    encoder = None
    final_report = None
    epoch_base = 0
    wall = 0.0

    def _crc(arrays):
        c = 0
        for a in arrays:
            c = zlib.crc32(np.ascontiguousarray(a).tobytes(), c)
        return c

    # bit-level fingerprints of each stage's parameters, taken at stage
    # start (post-transfer) and stage end; these make the transfer contract
    # (in-encoder of stage l+1 == out-encoder of stage l) checkable
    enc_in, enc_out, pred_in = [], [], []
    for li, level in enumerate(levels):
        cmap = cluster_index_map(level, spec.num_classes)
        stage_spec = netcore.ModelSpec(
            input_shape=spec.input_shape, layers=spec.layers,
            num_classes=len(level),
        )
        # stage 0 shares the baseline's init/shuffle streams, so a
        # singleton-only hierarchy reproduces the baseline exactly
        stage_seed = seed if li == 0 else child_seed(seed, STAGE_BASE + li)
        stage_rng = (child_rng(seed, SHUFFLE) if li == 0
                     else child_rng(seed, STAGE_BASE + li))
        params = netcore.init_params(stage_spec, stage_seed)
        if encoder is not None:
            params.encoder = [{k: v.copy() for k, v in lp.items()} for lp in encoder]
        enc_in.append(_crc(v for lp in params.encoder for v in lp.values()))
        pred_in.append(_crc([params.w, params.b]))
        stage_splits = replace(
            splits,
            train_y=cmap[splits.train_y],
            val_y=cmap[splits.val_y],
            test_y=cmap[splits.test_y],
        )
        report_map = None
        if li > 0:
            prev = cluster_index_map(levels[li - 1], spec.num_classes)
            report_map = np.asarray([prev[cluster[0]] for cluster in level])
        phases = [_Phase("ce", level=li, max_epochs=cfg.max_epochs, early_stop=True,
                         report_map=report_map)]
        stage = _run_phases(stage_spec, stage_splits, opt, cfg,
                            seed=stage_seed, phases=phases, params=params,
                            rng=stage_rng)
        for r in stage.rows:
            rows.append(replace(r, epoch=r.epoch + epoch_base, level=li))
        epoch_base += stage.total_epochs
        stage_epochs.append(stage.total_epochs)
        wall += stage.wall_seconds
        encoder = stage.params.encoder  # end-of-stage encoder carries over
        enc_out.append(_crc(v for lp in encoder for v in lp.values()))
        final_report = stage
    best_epoch = (final_report.best_val_epoch + epoch_base - stage_epochs[-1]
                  if final_report.best_val_epoch > 0 else 0)
    return TrainReport(
        rows=rows,
        best_val_epoch=best_epoch,
        best_val_acc=final_report.best_val_acc,
        test_acc=final_report.test_acc,
        wall_seconds=wall,
        params=final_report.params,
        best_params=final_report.best_params,
        extras={"stage_epochs": stage_epochs, "encoder_crc_in": enc_in,
                "encoder_crc_out": enc_out, "predictor_crc_in": pred_in},
    )
