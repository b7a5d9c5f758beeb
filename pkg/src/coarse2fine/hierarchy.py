"""Label hierarchies from class distance matrices via affinity clustering.

Affinity clustering is the Boruvka flavour of bottom-up clustering: every
round, each cluster picks the closest other cluster (single-linkage distance)
and the connected components of the pick graph merge.  Because every cluster
merges with at least one neighbour per round, the smallest cluster at least
doubles each round and the hierarchy depth is O(log K).

A hierarchy is an ordered list of partitions of the class set, coarsest
first; the last level is always the K singletons (the original classes).
The trivial single-cluster root is excluded — training on one class is
vacuous.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write_text


class HierarchyError(ValueError):
    pass


@dataclass
class LabelHierarchy:
    """Nested partitions of {0..K-1}, coarsest first, singletons last.

    ``levels[l]`` is a list of clusters; each cluster is a sorted list of
    class ids.  ``maps[l]`` sends class id -> cluster index at level ``l``.
    """

    levels: list
    num_classes: int
    class_names: list = field(default=None)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def class_to_cluster(self, level: int) -> np.ndarray:
        """Dense class-id -> cluster-index map for one level."""
        if not 0 <= level < len(self.levels):
            raise HierarchyError(f"level {level} out of range [0, {len(self.levels)})")
        m = np.full(self.num_classes, -1, dtype=np.int64)
        for ci, cluster in enumerate(self.levels[level]):
            for k in cluster:
                m[k] = ci
        if (m < 0).any():
            raise HierarchyError(f"level {level} does not cover all classes")
        return m

    def cluster_maps(self) -> list:
        return [self.class_to_cluster(l) for l in range(self.num_levels)]


def singleton_hierarchy(num_classes: int, class_names=None) -> LabelHierarchy:
    """The degenerate hierarchy: one level of K singletons."""
    return LabelHierarchy(
        levels=[[[k] for k in range(num_classes)]],
        num_classes=num_classes,
        class_names=class_names,
    )


def _validate_distance_matrix(dist: np.ndarray):
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise HierarchyError(f"distance matrix must be square, got {d.shape}")
    if d.shape[0] < 2:
        raise HierarchyError("need at least 2 classes to cluster")
    if not np.isfinite(d).all():
        raise HierarchyError("distance matrix has non-finite entries")
    if np.abs(d - d.T).max() > 1e-6:
        raise HierarchyError("distance matrix is not symmetric (tol 1e-6)")
    if np.abs(np.diag(d)).max() > 1e-9:
        raise HierarchyError("distance matrix diagonal must be zero")
    return d


def affinity_cluster(dist, class_names=None) -> LabelHierarchy:
    """Build a LabelHierarchy from a K×K class distance matrix.

    Ties in the nearest-cluster choice break toward the candidate whose
    smallest member id is lowest, which makes the output deterministic even
    on degenerate matrices.
    """
    d = _validate_distance_matrix(dist)
    k = d.shape[0]
    # cluster list stays sorted by smallest member, so a plain row argmin
    # already implements the tie-break.
    members = [[i] for i in range(k)]
    cd = d.copy()
    np.fill_diagonal(cd, np.inf)
    recorded = []
    while len(members) > 1:
        nearest = cd.argmin(axis=1)
        # merge connected components of the pick graph
        parent = list(range(len(members)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in enumerate(nearest):
            ra, rb = find(a), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups = {}
        for i in range(len(members)):
            groups.setdefault(find(i), []).append(i)
        group_list = sorted(groups.values(), key=lambda g: members[g[0]][0])
        new_members = [sorted(m for gi in g for m in members[gi]) for g in group_list]
        # single-linkage distances between merged clusters
        rows = np.stack([cd[g].min(axis=0) for g in group_list])
        cd = np.stack([rows[:, g].min(axis=1) for g in group_list], axis=1)
        np.fill_diagonal(cd, np.inf)
        members = new_members
        if len(members) > 1:
            recorded.append([list(c) for c in members])
    levels = list(reversed(recorded))
    # collapse duplicate consecutive levels (defensive; rounds always merge)
    deduped = []
    for lev in levels:
        if not deduped or deduped[-1] != lev:
            deduped.append(lev)
    deduped.append([[i] for i in range(k)])
    if len(deduped) >= 2 and deduped[-2] == deduped[-1]:
        deduped.pop(-2)
    return LabelHierarchy(levels=deduped, num_classes=k, class_names=class_names)


def validate_hierarchy(h: LabelHierarchy, num_classes: int) -> list:
    """Check every hierarchy invariant; returns violations (empty = valid)."""
    v = []
    if h.num_classes != num_classes:
        v.append(f"num_classes {h.num_classes} != expected {num_classes}")
    if not h.levels:
        v.append("no levels")
        return v
    full = set(range(num_classes))
    for li, level in enumerate(h.levels):
        seen = []
        for cluster in level:
            seen.extend(cluster)
        if sorted(seen) != sorted(full):
            v.append(f"level {li}: not a partition of all {num_classes} classes")
        if len(seen) != len(set(seen)):
            v.append(f"level {li}: overlapping clusters (not a partition)")
        if len(level) == 1 and num_classes > 1:
            v.append(f"level {li}: single all-class cluster (trivial root)")
    # bottom level must be the singletons
    bottom = h.levels[-1]
    if sorted(map(tuple, bottom)) != [(kk,) for kk in range(num_classes)]:
        v.append("bottom level not singletons")
    # refinement + strict coarsening + doubling
    for li in range(len(h.levels) - 1):
        coarse, fine = h.levels[li], h.levels[li + 1]
        fine_sets = [set(c) for c in fine]
        for cluster in coarse:
            cs = set(cluster)
            covered = set()
            for fs in fine_sets:
                if fs <= cs:
                    covered |= fs
                elif fs & cs:
                    v.append(f"level {li}: cluster {sorted(cs)} splits a finer cluster")
                    break
            else:
                if covered != cs:
                    v.append(f"level {li}: cluster {sorted(cs)} is not a union of finer clusters")
        if sorted(map(tuple, coarse)) == sorted(map(tuple, fine)):
            v.append(f"levels {li},{li + 1}: duplicate (no strict coarsening)")
        min_coarse = min((len(c) for c in coarse), default=0)
        min_fine = min((len(c) for c in fine), default=0)
        if min_coarse < 2 * min_fine:
            v.append(
                f"levels {li},{li + 1}: smallest cluster did not double "
                f"({min_coarse} < 2*{min_fine})"
            )
    if num_classes >= 2 and len(h.levels) > math.ceil(math.log2(num_classes)) + 1:
        v.append(f"depth {len(h.levels)} exceeds ceil(log2 K)+1")
    return v


def project_map(h: LabelHierarchy, fine_level: int, coarse_level: int) -> np.ndarray:
    """Map cluster indices at ``fine_level`` to indices at ``coarse_level``.

    Valid because levels are nested; used to score a fine-level classifier
    on a coarser task.
    """
    if coarse_level > fine_level:
        raise HierarchyError("coarse_level must not be below fine_level")
    cmap = h.class_to_cluster(coarse_level)
    out = np.empty(len(h.levels[fine_level]), dtype=np.int64)
    for ci, cluster in enumerate(h.levels[fine_level]):
        targets = {int(cmap[k]) for k in cluster}
        if len(targets) != 1:
            raise HierarchyError(
                f"cluster {cluster} at level {fine_level} spans several "
                f"level-{coarse_level} clusters"
            )
        out[ci] = targets.pop()
    return out


# ---------------------------------------------------------------------------
# serialization: levels as arrays of arrays of class names
# ---------------------------------------------------------------------------

def hierarchy_to_json(h: LabelHierarchy) -> str:
    names = h.class_names or [str(i) for i in range(h.num_classes)]
    obj = {
        "num_classes": h.num_classes,
        "class_names": list(names),
        "levels": [[[names[k] for k in cluster] for cluster in level] for level in h.levels],
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_hierarchy(h: LabelHierarchy, path):
    atomic_write_text(path, hierarchy_to_json(h))


def hierarchy_from_json(text: str) -> LabelHierarchy:
    obj = json.loads(text)
    try:
        names = list(obj["class_names"])
        k = int(obj["num_classes"])
        idx = {n: i for i, n in enumerate(names)}
        levels = [
            [sorted(idx[n] for n in cluster) for cluster in level]
            for level in obj["levels"]
        ]
    except (KeyError, TypeError) as e:
        raise HierarchyError(f"malformed hierarchy JSON: {e}") from e
    if len(idx) != k:
        raise HierarchyError("class_names are not unique or do not match num_classes")
    return LabelHierarchy(levels=levels, num_classes=k, class_names=names)


def load_hierarchy(path) -> LabelHierarchy:
    with open(path, "r", encoding="utf-8") as f:
        h = hierarchy_from_json(f.read())
    bad = validate_hierarchy(h, h.num_classes)
    if bad:
        raise HierarchyError("invalid hierarchy: " + "; ".join(bad))
    return h
