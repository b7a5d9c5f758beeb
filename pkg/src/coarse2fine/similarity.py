"""Class distance matrices from trained models.

Five metric kinds:

- ``embedding_dist``: cosine distance between the columns of the predictor
  weight matrix W (the class embeddings).  The workhorse metric.
- ``embedding_sim``: 1 - embedding_dist off-diagonal.  Deliberately
  backwards (similar classes look far apart), used as an ablation control.
- ``confusion_dist``: 1 - symmetrized, max-normalized confusion.  Classes
  the model confuses look close.
- ``confusion``: the symmetrized confusion itself used directly as a
  distance — also deliberately backwards (confused classes merge last).
- ``random``: seeded random symmetric matrix, the ordering-only control.
"""

from __future__ import annotations

import numpy as np

from . import netcore
from ._util import atomic_write_text, fmt9

METRIC_KINDS = ("embedding_dist", "embedding_sim", "confusion", "confusion_dist", "random")


class MetricError(ValueError):
    pass


def confusion_from_predictions(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Row-stochastic confusion matrix: entry (i,j) = P(pred j | true i).

    Rows with zero support become uniform rather than all-zero, so no class
    looks spuriously "maximally distant" from everything.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise MetricError("y_true and y_pred must have the same shape")
    if y_true.size and (y_true.min() < 0 or y_true.max() >= num_classes):
        raise MetricError(f"labels out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.float64)
    np.add.at(counts, (y_true, y_pred), 1.0)
    support = counts.sum(axis=1, keepdims=True)
    c = np.where(support > 0, counts / np.maximum(support, 1.0), 1.0 / num_classes)
    return c


def estimate_confusion(spec, params, x, y, batch_size: int = 512) -> np.ndarray:
    """Confusion matrix of a model over a labeled dataset."""
    if x.shape[0] == 0:
        raise MetricError("cannot estimate a confusion matrix from an empty dataset")
    preds = []
    for s in range(0, x.shape[0], batch_size):
        logits, _ = netcore.forward(spec, params, x[s : s + batch_size])
        preds.append(netcore.predict(logits))
    return confusion_from_predictions(np.asarray(y), np.concatenate(preds), spec.num_classes)


def embedding_distance(w: np.ndarray) -> np.ndarray:
    """Pairwise cosine distance (1 - cosine similarity) of the columns of W.

    D has an exactly-zero diagonal; a zero-norm column is an error because
    cosine is undefined there.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise MetricError(f"W must be 2-d (E, K), got shape {w.shape}")
    norms = np.linalg.norm(w, axis=0)
    if (norms == 0).any():
        raise MetricError("zero-norm class embedding column; cosine distance undefined")
    g = (w.T @ w) / np.outer(norms, norms)
    d = 1.0 - np.clip(g, -1.0, 1.0)
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return d


def _random_distances(num_classes: int, seed) -> np.ndarray:
    """Symmetric control matrix: i<j entries i.i.d. normal, rank-normalized
    into (0,1).  Only the ordering of pairs matters to affinity clustering,
    and ranks make tests deterministic in distribution."""
    rng = np.random.default_rng(seed)
    k = num_classes
    p = k * (k - 1) // 2
    raw = rng.normal(size=p)
    ranks = np.empty(p, dtype=np.float64)
    ranks[np.argsort(raw, kind="stable")] = np.arange(1, p + 1)
    vals = ranks / (p + 1)
    d = np.zeros((k, k), dtype=np.float64)
    iu = np.triu_indices(k, k=1)
    d[iu] = vals
    d += d.T
    return d


def build_metric(kind: str, confusion=None, embeddings=None, seed=None,
                 num_classes=None) -> np.ndarray:
    """Build the K×K class distance matrix for a metric kind.

    ``embeddings`` is the (E, K) predictor weight matrix; ``confusion`` a
    row-stochastic confusion matrix; ``seed``/``num_classes`` drive the
    random control.
    """
    if kind not in METRIC_KINDS:
        raise MetricError(f"unknown metric kind {kind!r}; expected one of {METRIC_KINDS}")
    if kind == "embedding_dist" or kind == "embedding_sim":
        if embeddings is None:
            raise MetricError(f"{kind} requires the class embedding matrix W")
        d = embedding_distance(embeddings)
        if kind == "embedding_sim":
            d = 1.0 - d
            np.fill_diagonal(d, 0.0)
    elif kind == "confusion" or kind == "confusion_dist":
        if confusion is None:
            raise MetricError(f"{kind} requires a confusion matrix")
        c = np.asarray(confusion, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise MetricError(f"confusion matrix must be square, got {c.shape}")
        s = c + c.T
        s = s / s.max()  # keep 1 - s inside [0, 1]
        if kind == "confusion":
            d = s.copy()
        else:
            d = 1.0 - s
        np.fill_diagonal(d, 0.0)
    else:  # random
        if seed is None or num_classes is None:
            raise MetricError("random metric requires seed and num_classes")
        d = _random_distances(num_classes, seed)
    if not np.isfinite(d).all():
        raise MetricError("metric produced non-finite entries")
    return d


# ---------------------------------------------------------------------------
# CSV round-trip (inspection + injecting hand-crafted matrices)
# ---------------------------------------------------------------------------

def save_matrix_csv(matrix: np.ndarray, path):
    m = np.asarray(matrix, dtype=np.float64)
    lines = [",".join(fmt9(v) for v in row) for row in m]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        rows = [
            [float(v) for v in line.split(",")]
            for line in f.read().strip().splitlines()
            if line.strip()
        ]
    if not rows:
        raise MetricError(f"empty matrix file: {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MetricError(f"ragged matrix file: {path}")
    return np.asarray(rows, dtype=np.float64)
