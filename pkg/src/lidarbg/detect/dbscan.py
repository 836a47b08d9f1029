"""DBSCAN with a KD-tree neighbourhood search.

``min_pts`` counts the point itself.  Border points join the cluster of their
nearest core neighbour (ties: lexicographically smallest core coordinates),
which makes the partition independent of input order.  Cluster labels are
numbered by each cluster's lexicographically smallest point.
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

NOISE = -1


def _pairs(X, eps, range_scaling, reference_range):
    if len(X) < 2:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    tree = cKDTree(X)
    if not range_scaling:
        p = tree.query_pairs(eps, output_type="ndarray")
        d = np.linalg.norm(X[p[:, 0]] - X[p[:, 1]], axis=1) if len(p) else np.zeros(0)
        keep = d <= eps
        return p[keep], d[keep]
    r = np.linalg.norm(X, axis=1)
    p = tree.query_pairs(eps * max(1.0, r.max() / reference_range), output_type="ndarray")
    if not len(p):
        return p, np.zeros(0)
    d = np.linalg.norm(X[p[:, 0]] - X[p[:, 1]], axis=1)
    lim = pair_eps(eps, r[p[:, 0]], r[p[:, 1]], reference_range)
    keep = d <= lim
    return p[keep], d[keep]


def pair_eps(eps, ri, rj, reference_range):
    """Symmetric range-scaled radius for a pair of points."""
    return eps * np.maximum(1.0, (ri + rj) / (2.0 * reference_range))


def dbscan(points, eps: float = 0.8, min_pts: int = 5, range_scaling: bool = False,
           reference_range: float = 30.0) -> np.ndarray:
    """Cluster labels (``NOISE`` = -1)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    n = len(X)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    pairs, dist = _pairs(X, eps, range_scaling, reference_range)
    deg = np.bincount(pairs.ravel(), minlength=n) if len(pairs) else np.zeros(n, dtype=np.int64)
    core = deg + 1 >= min_pts
    if not core.any():
        return labels

    both = core[pairs[:, 0]] & core[pairs[:, 1]]
    cp = pairs[both]
    g = coo_matrix((np.ones(len(cp)), (cp[:, 0], cp[:, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    comp = np.where(core, comp, -1)

    # border points: nearest core neighbour
    a, b = pairs[:, 0], pairs[:, 1]
    cand_pt = np.concatenate([a[core[b] & ~core[a]], b[core[a] & ~core[b]]])
    cand_core = np.concatenate([b[core[b] & ~core[a]], a[core[a] & ~core[b]]])
    cand_d = np.concatenate([dist[core[b] & ~core[a]], dist[core[a] & ~core[b]]])
    assigned = comp.copy()
    if len(cand_pt):
        cx = X[cand_core]
        keys = [cx[:, j] for j in range(X.shape[1] - 1, -1, -1)] + [cand_d, cand_pt]
        order = np.lexsort(keys)
        first = np.ones(len(order), dtype=bool)
        sp = cand_pt[order]
        first[1:] = sp[1:] != sp[:-1]
        sel = order[first]
        assigned[cand_pt[sel]] = comp[cand_core[sel]]

    # canonical numbering by each cluster's lexicographically smallest member
    members = np.flatnonzero(assigned >= 0)
    lex = np.lexsort([X[members, j] for j in range(X.shape[1] - 1, -1, -1)])
    seen = {}
    for i in members[lex]:
        c = assigned[i]
        if c not in seen:
            seen[c] = len(seen)
    remap = np.full(comp.max() + 1, NOISE, dtype=np.int64)
    for c, new in seen.items():
        remap[c] = new
    labels[members] = remap[assigned[members]]
    return labels


def cluster(points, eps: float = 0.8, min_pts: int = 5, **kw) -> Tuple[List[np.ndarray], np.ndarray]:
    """(list of cluster point arrays, noise points)."""
    X = np.asarray(points, dtype=np.float64)
    labels = dbscan(X, eps, min_pts, **kw)
    k = labels.max() + 1 if len(labels) else 0
    return [X[labels == c] for c in range(k)], X[labels == NOISE]
