"""Synthetic dataset generators, CIFAR binary reader, splits, and disk format.

Generators are pure functions of (config, seed): two calls with the same
arguments produce byte-identical datasets.  Images are uint8 HWC; vector
datasets are float32.

Disk format (little-endian): magic "C2FD", version u8=1, dtype u8 (0 = u8
image, 1 = f32 vector), N u32, H u32, W u32, C u32 (vectors: dim, 0, 0),
K u32, labels as N x u16, raw row-major data, trailing CRC32 of everything
before it.  Class names and per-sample metadata live in a JSON sidecar at
``<path>.meta.json``.
"""

from __future__ import annotations

import dataclasses
import glob
import json
import math
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write_bytes, atomic_write_text, jsonable, round_half_away


class DatasetError(ValueError):
    pass


class DatasetFormatError(DatasetError):
    """On-disk format problems: bad magic, version, checksum, truncation."""


# ---------------------------------------------------------------------------
# dataset container
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Labeled dataset: uint8 images (N,H,W,C) or float32 vectors (N,D)."""

    data: np.ndarray
    labels: np.ndarray
    class_names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.shape[0] != self.labels.shape[0]:
            raise DatasetError(
                f"{self.data.shape[0]} samples but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels out of range [0, {self.num_classes})")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def is_image(self) -> bool:
        return self.data.ndim == 4

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        meta = {}
        for k, v in self.meta.items():
            try:
                same_len = len(v) == len(self)
            except TypeError:
                same_len = False
            if same_len:
                meta[k] = np.asarray(v)[idx] if isinstance(v, np.ndarray) else [v[i] for i in idx]
            else:
                meta[k] = v
        return Dataset(self.data[idx], self.labels[idx], list(self.class_names), meta)


def to_model_input(data: np.ndarray) -> np.ndarray:
    """uint8 images -> float32 in [0,1]; float data passes through as float32."""
    if data.dtype == np.uint8:
        return data.astype(np.float32) / np.float32(255.0)
    return np.asarray(data, dtype=np.float32)


# ---------------------------------------------------------------------------
# Shapes: 10 geometric kinds x 3 colors on black background
# ---------------------------------------------------------------------------

SHAPE_KINDS = ("circle", "ellipse", "poly3", "poly4", "poly5", "poly6",
               "poly7", "poly8", "poly9", "poly10")
SHAPE_COLORS = {"magenta": (255, 0, 255), "cyan": (0, 255, 255), "grey": (128, 128, 128)}
_COLOR_ORDER = ("magenta", "cyan", "grey")


@dataclass
class ShapesConfig:
    image_size: int = 64
    samples_per_class: int = 100
    radius_frac: tuple = (0.15, 0.35)  # shape radius as a fraction of image size
    ellipse_ratio: tuple = (0.35, 0.7)  # minor/major axis ratio
    rotation_range: tuple = (0.0, math.tau)
    per_shape: bool = False  # legacy balance: count per shape kind, color random

    def __post_init__(self):
        if self.samples_per_class < 0:
            raise DatasetError("samples_per_class must be >= 0")
        rmax = self.radius_frac[1] * self.image_size
        if 2 * rmax > self.image_size - 2:
            raise DatasetError(
                f"max radius {rmax:.1f}px leaves no room for placement in a "
                f"{self.image_size}px image"
            )


def shapes_class_names() -> list:
    return [f"{s}_{c}" for s in SHAPE_KINDS for c in _COLOR_ORDER]


def _pixel_grid(size):
    # pixel-center coordinates
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    return xs, ys


def _shape_mask(kind, size, cx, cy, r, rotation, ellipse_ratio):
    xs, ys = _pixel_grid(size)
    dx, dy = xs - cx, ys - cy
    if kind == "circle":
        return dx * dx + dy * dy <= r * r
    if kind == "ellipse":
        a, b = r, r * ellipse_ratio
        co, si = math.cos(rotation), math.sin(rotation)
        u = dx * co + dy * si
        v = -dx * si + dy * co
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    n = int(kind[4:])
    ang = rotation + np.arange(n) * (math.tau / n)
    vx = cx + r * np.cos(ang)
    vy = cy + r * np.sin(ang)
    mask = np.ones((size, size), dtype=bool)
    for i in range(n):
        x1, y1 = vx[i], vy[i]
        x2, y2 = vx[(i + 1) % n], vy[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        # keep the side of the edge that contains the centroid
        side = ex * (cy - y1) - ey * (cx - x1)
        val = ex * (ys - y1) - ey * (xs - x1)
        mask &= (val * np.sign(side)) >= 0
    return mask


def gen_shapes(cfg: ShapesConfig, seed: int) -> Dataset:
    """Render one colored shape per image on black; exactly samples_per_class
    images per (shape, color) class unless ``per_shape`` is set."""
    rng = np.random.default_rng(seed)
    size = cfg.image_size
    names = shapes_class_names()
    images, labels = [], []
    meta = {"shape_kind": [], "color": [], "center": [], "radius": [], "rotation": []}

    def render(shape_idx, color_name):
        kind = SHAPE_KINDS[shape_idx]
        for _ in range(100):
            r = rng.uniform(*cfg.radius_frac) * size
            cx = rng.uniform(r + 1, size - r - 1)
            cy = rng.uniform(r + 1, size - r - 1)
            rot = rng.uniform(*cfg.rotation_range)
            ratio = rng.uniform(*cfg.ellipse_ratio)
            mask = _shape_mask(kind, size, cx, cy, r, rot, ratio)
            if mask.any():
                img = np.zeros((size, size, 3), dtype=np.uint8)
                img[mask] = SHAPE_COLORS[color_name]
                meta["shape_kind"].append(kind)
                meta["color"].append(color_name)
                meta["center"].append((cx, cy))
                meta["radius"].append(r)
                meta["rotation"].append(rot)
                return img
        raise DatasetError(f"could not render a non-empty {kind} after 100 tries")

    if cfg.per_shape:
        for si in range(len(SHAPE_KINDS)):
            for _ in range(cfg.samples_per_class):
                ci = int(rng.integers(0, len(_COLOR_ORDER)))
                images.append(render(si, _COLOR_ORDER[ci]))
                labels.append(si * 3 + ci)
    else:
        for si in range(len(SHAPE_KINDS)):
            for ci, cname in enumerate(_COLOR_ORDER):
                for _ in range(cfg.samples_per_class):
                    images.append(render(si, cname))
                    labels.append(si * 3 + ci)

    data = (np.stack(images) if images
            else np.zeros((0, size, size, 3), dtype=np.uint8))
    return Dataset(data, np.asarray(labels, dtype=np.int64), names, meta)


# ---------------------------------------------------------------------------
# Gaussian blobs: label = left/right sequence of consecutive x-centers
# ---------------------------------------------------------------------------

@dataclass
class BlobsConfig:
    image_size: int = 64
    k: int = 3  # number of blobs per image; 2^(k-1) classes
    samples_per_class: int = 100
    sigma_frac: tuple = (0.06, 0.15)  # per-axis stddev as a fraction of size
    band: tuple = (0.2, 0.8)  # placement band inside the allowed interval

    def __post_init__(self):
        if self.k < 2:
            raise DatasetError("need k >= 2 blobs for at least one direction")
        if self.samples_per_class < 0:
            raise DatasetError("samples_per_class must be >= 0")


def blobs_class_names(k: int) -> list:
    names = [""]
    for _ in range(k - 1):
        names = [n + d for n in names for d in ("L", "R")]
    return names


def derive_blob_label(centers) -> str:
    """Direction string: char i is L if center i+1 is left of center i."""
    if len(centers) < 2:
        raise DatasetError("need at least 2 centers to derive a label")
    out = []
    for (x1, _), (x2, _) in zip(centers, centers[1:]):
        if x2 == x1:
            raise DatasetError("equal consecutive x-centers: direction undefined")
        out.append("L" if x2 < x1 else "R")
    return "".join(out)


def _place_centers(rng, size, path, band):
    lo_b, hi_b = band
    for _ in range(1000):
        lo, hi = 0.0, float(size)
        x = rng.uniform(lo + lo_b * (hi - lo), lo + hi_b * (hi - lo))
        centers = [(x, rng.uniform(lo_b * size, hi_b * size))]
        ok = True
        for d in path:
            if d == "L":
                hi = centers[-1][0]
            else:
                lo = centers[-1][0]
            if hi - lo <= 1e-6:
                ok = False
                break
            x = rng.uniform(lo + lo_b * (hi - lo), lo + hi_b * (hi - lo))
            centers.append((x, rng.uniform(lo_b * size, hi_b * size)))
        if ok:
            return centers
    raise DatasetError(f"could not place blob centers for path {path!r} after 1000 tries")


def gen_blobs(cfg: BlobsConfig, seed: int) -> Dataset:
    """k Gaussian intensity bumps per image; class = the L/R path of the
    2nd..k-th blob relative to its predecessor.  Classes exactly balanced."""
    rng = np.random.default_rng(seed)
    size = cfg.image_size
    names = blobs_class_names(cfg.k)
    xs, ys = _pixel_grid(size)
    images, labels = [], []
    all_centers, all_sigmas = [], []
    for ci, path in enumerate(names):
        for _ in range(cfg.samples_per_class):
            centers = _place_centers(rng, size, path, cfg.band)
            sigmas = rng.uniform(cfg.sigma_frac[0] * size, cfg.sigma_frac[1] * size,
                                 size=(cfg.k, 2))
            total = np.zeros((size, size), dtype=np.float64)
            for (cx, cy), (sx, sy) in zip(centers, sigmas):
                m2 = ((xs - cx) / sx) ** 2 + ((ys - cy) / sy) ** 2
                total += 255.0 * np.exp(-0.5 * m2)
            img = np.rint(np.clip(total, 0.0, 255.0)).astype(np.uint8)
            images.append(img[..., None])
            labels.append(ci)
            all_centers.append(centers)
            all_sigmas.append(sigmas.tolist())
    data = (np.stack(images) if images
            else np.zeros((0, size, size, 1), dtype=np.uint8))
    meta = {"centers": all_centers, "sigmas": all_sigmas}
    return Dataset(data, np.asarray(labels, dtype=np.int64), names, meta)


# ---------------------------------------------------------------------------
# Gaussian vector classes from a perturbation tree
# ---------------------------------------------------------------------------

@dataclass
class VectorsConfig:
    dim: int = 16
    num_classes: int = 8
    tree_depth: int = 3
    level_scales: tuple = (4.0, 2.0, 1.0)  # perturbation stddev per tree level
    noise_scale: float = 0.25
    samples_per_class: int = 100
    task_seed: int = 0  # fixes the class means; the call seed only samples

    def __post_init__(self):
        if self.num_classes > 2 ** self.tree_depth:
            raise DatasetError(
                f"num_classes {self.num_classes} exceeds 2^tree_depth = {2 ** self.tree_depth}"
            )
        if len(self.level_scales) != self.tree_depth:
            raise DatasetError("need one level_scale per tree level")
        if self.samples_per_class < 0:
            raise DatasetError("samples_per_class must be >= 0")


def gen_vectors(cfg: VectorsConfig, seed: int) -> Dataset:
    """Class means grown down a binary Gaussian tree (child mean = parent
    mean + N(0, scale_l^2 I)); samples = class mean + isotropic noise.  The
    ground-truth tree paths are kept in meta for hierarchy-recovery checks.

    The tree is a function of cfg.task_seed alone, so independently seeded
    draws from one config (train pool vs test set) share the same classes."""
    tree_rng = np.random.default_rng(cfg.task_seed)
    rng = np.random.default_rng(seed)
    means = [np.zeros(cfg.dim)]
    paths = [""]
    for level in range(cfg.tree_depth):
        scale = cfg.level_scales[level]
        nxt_means, nxt_paths = [], []
        for m, p in zip(means, paths):
            for branch in ("0", "1"):
                nxt_means.append(m + tree_rng.normal(0.0, scale, size=cfg.dim))
                nxt_paths.append(p + branch)
        means, paths = nxt_means, nxt_paths
    means = means[: cfg.num_classes]
    paths = paths[: cfg.num_classes]
    data, labels = [], []
    for ci, m in enumerate(means):
        samples = m + rng.normal(0.0, cfg.noise_scale, size=(cfg.samples_per_class, cfg.dim))
        data.append(samples)
        labels.extend([ci] * cfg.samples_per_class)
    stacked = (np.concatenate(data).astype(np.float32) if data
               else np.zeros((0, cfg.dim), dtype=np.float32))
    meta = {
        "class_means": [m.tolist() for m in means],
        "leaf_paths": paths,
        "level_scales": list(cfg.level_scales),
        "noise_scale": cfg.noise_scale,
    }
    return Dataset(stacked, np.asarray(labels, dtype=np.int64), list(paths), meta)


# ---------------------------------------------------------------------------
# CIFAR binary reader
# ---------------------------------------------------------------------------

CIFAR10_NAMES = ["airplane", "automobile", "bird", "cat", "deer",
                 "dog", "frog", "horse", "ship", "truck"]


def load_cifar_binary(path, variant: str = "cifar10") -> Dataset:
    """Read CIFAR binary batches: 3073-byte records for cifar10 (label +
    3072 channel-major pixels), 3074 for cifar100 (coarse, fine, pixels).
    ``path`` may be one .bin file or a directory of batches."""
    if variant not in ("cifar10", "cifar100-fine", "cifar100-coarse"):
        raise DatasetError(f"unknown CIFAR variant {variant!r}")
    path = os.fspath(path)
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "data_batch_*.bin")))
        if not files:
            files = sorted(glob.glob(os.path.join(path, "*.bin")))
        if not files:
            raise DatasetFormatError(f"no .bin files under {path}")
    else:
        files = [path]
    rec = 3073 if variant == "cifar10" else 3074
    raws = []
    for f in files:
        with open(f, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % rec != 0:
            raise DatasetFormatError(
                f"{f}: size {len(raw)} is not a multiple of the {rec}-byte record"
            )
        raws.append(np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec))
    recs = np.concatenate(raws)
    if variant == "cifar10":
        labels = recs[:, 0].astype(np.int64)
        pixels = recs[:, 1:]
        names = list(CIFAR10_NAMES)
    elif variant == "cifar100-fine":
        labels = recs[:, 1].astype(np.int64)
        pixels = recs[:, 2:]
        names = [f"fine_{i}" for i in range(100)]
    else:
        labels = recs[:, 0].astype(np.int64)
        pixels = recs[:, 2:]
        names = [f"coarse_{i}" for i in range(20)]
    if labels.size and labels.max() >= len(names):
        raise DatasetFormatError(f"label {labels.max()} out of range for {variant}")
    images = pixels.reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return Dataset(np.ascontiguousarray(images), labels, names, {})


# ---------------------------------------------------------------------------
# disk format
# ---------------------------------------------------------------------------

_MAGIC = b"C2FD"
_VERSION = 1


def save_dataset(ds: Dataset, path):
    """Write the binary dataset file plus the ``<path>.meta.json`` sidecar."""
    if ds.is_image:
        if ds.data.dtype != np.uint8:
            raise DatasetError("image datasets must be uint8")
        dtype_code = 0
        dims = ds.data.shape[1:]
    elif ds.data.ndim == 2:
        if ds.data.dtype != np.float32:
            raise DatasetError("vector datasets must be float32")
        dtype_code = 1
        dims = (ds.data.shape[1], 0, 0)
    else:
        raise DatasetError(f"unsupported data shape {ds.data.shape}")
    if ds.num_classes > 0xFFFF:
        raise DatasetError("more than 65535 classes cannot be stored (u16 labels)")
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<BBI", _VERSION, dtype_code, len(ds))
    buf += struct.pack("<IIII", dims[0], dims[1], dims[2], ds.num_classes)
    buf += ds.labels.astype("<u2").tobytes()
    buf += (ds.data.tobytes() if dtype_code == 0
            else ds.data.astype("<f4", copy=False).tobytes())
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    atomic_write_bytes(path, bytes(buf))
    sidecar = {"class_names": list(ds.class_names), "meta": jsonable(ds.meta)}
    atomic_write_text(os.fspath(path) + ".meta.json",
                      json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 4 or buf[:4] != _MAGIC:
        raise DatasetFormatError(f"{path}: bad magic (not a C2FD dataset)")
    if len(buf) < 30:
        raise DatasetFormatError(f"{path}: truncated header")
    version, dtype_code, n = struct.unpack_from("<BBI", buf, 4)
    if version != _VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if dtype_code not in (0, 1):
        raise DatasetFormatError(f"{path}: unknown dtype code {dtype_code}")
    d0, d1, d2, k = struct.unpack_from("<IIII", buf, 10)
    (stored_crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise DatasetFormatError(f"{path}: checksum failure")
    off = 26
    labels = np.frombuffer(buf, dtype="<u2", count=n, offset=off).astype(np.int64)
    off += 2 * n
    if dtype_code == 0:
        count = n * d0 * d1 * d2
        expected_end = off + count
        if expected_end + 4 != len(buf):
            raise DatasetFormatError(f"{path}: truncated data section")
        data = np.frombuffer(buf, dtype=np.uint8, count=count, offset=off)
        data = data.reshape(n, d0, d1, d2).copy()
    else:
        count = n * d0
        if off + 4 * count + 4 != len(buf):
            raise DatasetFormatError(f"{path}: truncated data section")
        data = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
        data = data.reshape(n, d0).astype(np.float32)
    side = os.fspath(path) + ".meta.json"
    if os.path.exists(side):
        with open(side, "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        names = sidecar.get("class_names") or [f"class_{i}" for i in range(k)]
        meta = sidecar.get("meta", {})
    else:
        names = [f"class_{i}" for i in range(k)]
        meta = {}
    if len(names) != k:
        raise DatasetFormatError(f"{path}: sidecar names ({len(names)}) != K ({k})")
    return Dataset(data, labels, names, meta)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split_and_subsample(ds: Dataset, val_fraction: float,
                        per_class_train_count=None, seed: int = 0):
    """Subsample to at most ``per_class_train_count`` per class, then set
    aside ``val_fraction`` of that uniformly at random.  Returns
    (train, val); any test set is handled separately and stays untouched."""
    if not 0 <= val_fraction < 1:
        raise DatasetError("val_fraction must be in [0, 1)")
    if per_class_train_count is not None and per_class_train_count < 0:
        raise DatasetError("per_class_train_count must be >= 0")
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        if per_class_train_count is not None and len(idx) > per_class_train_count:
            idx = rng.choice(idx, size=int(per_class_train_count), replace=False)
        keep.append(np.sort(idx))
    pool = np.concatenate(keep) if keep else np.zeros(0, dtype=np.int64)
    n_val = round_half_away(val_fraction * len(pool))
    perm = rng.permutation(len(pool))
    val_idx = np.sort(pool[perm[:n_val]])
    train_idx = np.sort(pool[perm[n_val:]])
    return ds.subset(train_idx), ds.subset(val_idx)


# ---------------------------------------------------------------------------
# generator dispatch (used by the CLI and harness)
# ---------------------------------------------------------------------------

GENERATORS = {
    "shapes": (ShapesConfig, gen_shapes),
    "blobs": (BlobsConfig, gen_blobs),
    "vectors": (VectorsConfig, gen_vectors),
}


def config_from_dict(cls, d: dict):
    """Build a config dataclass from a dict, rejecting unknown keys."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise DatasetError(
            f"unknown {cls.__name__} keys: {sorted(unknown)}; known: {sorted(known)}"
        )
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in d:
            v = d[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)


def generate(kind: str, cfg_dict: dict, seed: int) -> Dataset:
    if kind not in GENERATORS:
        raise DatasetError(f"unknown generator kind {kind!r}; known: {sorted(GENERATORS)}")
    cls, fn = GENERATORS[kind]
    return fn(config_from_dict(cls, cfg_dict or {}), seed)
