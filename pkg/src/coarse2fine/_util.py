"""Small shared helpers: seeding substreams, rounding, formatting, atomic IO."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

# Fixed substream tags so independent consumers of one experiment seed never
# share an RNG stream.  Stages of the staged trainer use STAGE_BASE + level.
SHUFFLE = 1
DATA_TEST = 2
METRIC = 3
SPLIT = 4
STAGE_BASE = 100


def child_rng(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator for substream ``tags`` of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(tags)))


def child_seed(seed: int, *tags: int) -> int:
    """64-bit integer seed for substream ``tags`` of ``seed``."""
    st = np.random.SeedSequence(seed, spawn_key=tuple(tags)).generate_state(2, np.uint32)
    return (int(st[0]) << 32) | int(st[1])


def round_half_away(x: float) -> int:
    """round() with halves away from zero (3.5 -> 4), not banker's rounding."""
    if x >= 0:
        return int(np.floor(x + 0.5))
    return -int(np.floor(-x + 0.5))


def fmt9(x) -> str:
    """Format a number with 9 significant digits (CSV convention)."""
    return f"{float(x):.9g}"


def atomic_write_bytes(path, data: bytes):
    """Write a file atomically: temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    """Canonical JSON: sorted keys, 2-space indent, trailing newline."""
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
