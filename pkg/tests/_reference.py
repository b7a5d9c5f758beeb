"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (explicit loops, float64)
and deliberately shares no code with the package: these functions are what
the fast implementations are checked against.
"""

import numpy as np


# ---------------------------------------------------------------------------
# straight-line float64 forward pass
# ---------------------------------------------------------------------------

def ref_forward(spec, params, batch):
    """Float64 re-implementation of the model forward pass.

    Conv is computed as nine shifted accumulations instead of im2col+GEMM;
    pooling as an elementwise max of the four window corners.
    """
    x = np.asarray(batch, dtype=np.float64)
    for lay, lp in zip(spec.layers, params.encoder):
        if lay.kind == "conv3x3":
            w = lp["w"].astype(np.float64)
            b = lp["b"].astype(np.float64)
            n, h, wd, _ = x.shape
            out = np.zeros((n, h - 2, wd - 2, w.shape[3]), dtype=np.float64)
            for u in range(3):
                for v in range(3):
                    out += x[:, u : u + h - 2, v : v + wd - 2, :] @ w[u, v]
            x = out + b
        elif lay.kind == "relu":
            x = np.maximum(x, 0.0)
        elif lay.kind == "maxpool2x2":
            n, h, wd, c = x.shape
            hh, ww = h // 2, wd // 2
            xe = x[:, : hh * 2, : ww * 2, :]
            m = xe[:, 0::2, 0::2, :]
            for du, dv in ((0, 1), (1, 0), (1, 1)):
                m = np.maximum(m, xe[:, du::2, dv::2, :])
            x = m
        elif lay.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif lay.kind == "dense":
            x = x @ lp["w"].astype(np.float64) + lp["b"].astype(np.float64)
        else:
            raise AssertionError(lay.kind)
    return x @ params.w.astype(np.float64) + params.b.astype(np.float64)


def ref_softmax_ce(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    total = 0.0
    for i, y in enumerate(labels):
        m = z[i].max()
        total += m + np.log(np.exp(z[i] - m).sum()) - z[i, y]
    return total / len(labels)


def ref_marginalized_ce(logits, labels, cluster_map):
    z = np.asarray(logits, dtype=np.float64)
    cm = np.asarray(cluster_map)
    total = 0.0
    for i, y in enumerate(labels):
        m = z[i].max()
        lse_all = m + np.log(np.exp(z[i] - m).sum())
        members = [k for k in range(z.shape[1]) if cm[k] == cm[y]]
        zin = z[i, members]
        mi = zin.max()
        lse_in = mi + np.log(np.exp(zin - mi).sum())
        total += lse_all - lse_in
    return total / len(labels)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def fd_gradients(loss_of_arrays, arrays, h=1e-3):
    """Central finite-difference gradient of a scalar loss w.r.t. each array.

    ``loss_of_arrays(arrays) -> float`` must be pure.  Arrays are perturbed
    in float64 copies one element at a time.
    """
    base = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
    grads = []
    for ai in range(len(base)):
        g = np.zeros_like(base[ai])
        flat = base[ai].reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp = loss_of_arrays(base)
            flat[j] = orig - h
            lm = loss_of_arrays(base)
            flat[j] = orig
            gflat[j] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


# ---------------------------------------------------------------------------
# exhaustive affinity clustering
# ---------------------------------------------------------------------------

def ref_affinity_rounds(dist):
    """Round-by-round affinity clustering by exhaustive search.

    Each round every cluster picks its nearest other cluster under
    single-linkage distance (ties -> lowest smallest-member id), the pick
    graph's connected components merge, and the resulting partition is
    recorded.  Returns a list of partitions, one per round, each a set of
    frozensets; the final recorded partition is the 1-cluster root.
    """
    d = np.asarray(dist, dtype=np.float64)
    k = d.shape[0]
    clusters = [frozenset([i]) for i in range(k)]
    rounds = []
    while len(clusters) > 1:
        clusters.sort(key=min)
        picks = {}
        for a in clusters:
            best = None
            bestd = np.inf
            for b in clusters:  # sorted by smallest member: first hit wins ties
                if b is a:
                    continue
                dd = min(d[i, j] for i in a for j in b)
                if dd < bestd:
                    bestd = dd
                    best = b
            picks[a] = best
        # merge connected components of the undirected pick graph
        parent = {c: c for c in clusters}

        def find(c):
            while parent[c] is not c:
                parent[c] = parent[parent[c]]
                c = parent[c]
            return c

        for a, b in picks.items():
            ra, rb = find(a), find(b)
            if ra is not rb:
                # root at the cluster with the smaller smallest member
                if min(ra) < min(rb):
                    parent[rb] = ra
                else:
                    parent[ra] = rb
        merged = {}
        for c in clusters:
            merged.setdefault(find(c), set()).update(c)
        clusters = [frozenset(s) for s in merged.values()]
        rounds.append({frozenset(s) for s in merged.values()})
    return rounds
