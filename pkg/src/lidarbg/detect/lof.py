"""Local outlier factor with exactly ``k`` nearest neighbours per point."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

# keeps the local reachability density finite on duplicate points
_EPS = 1e-10


def lof_scores(points, k: int = 10) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    n = len(X)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k + 1:
        return np.ones(n)
    dist, idx = cKDTree(X).query(X, k=k + 1)
    # drop self; with duplicates the self hit may not be in column 0
    own = idx == np.arange(n)[:, None]
    has_self = own.any(axis=1)
    drop = np.where(has_self, np.argmax(own, axis=1), k)
    keep = np.ones_like(own)
    keep[np.arange(n), drop] = False
    dist = dist[keep].reshape(n, k)
    idx = idx[keep].reshape(n, k)
    kdist = dist[:, -1]
    reach = np.maximum(dist, kdist[idx])
    lrd = 1.0 / (reach.mean(axis=1) + _EPS)
    return lrd[idx].mean(axis=1) / lrd


def lof_mask(points, k: int = 10, threshold: float = 1.5) -> np.ndarray:
    """True for points kept (LOF <= threshold)."""
    return lof_scores(points, k) <= threshold


def lof_filter(points, k: int = 10, threshold: float = 1.5) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points[lof_mask(points, k, threshold)]
