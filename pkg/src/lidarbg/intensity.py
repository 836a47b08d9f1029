"""Per-cell 1-D Gaussian mixtures over return intensity, and the induced point weight.

The EM engine works on a batch of cells at once (``(cells, samples)`` arrays
with NaN padding); fitting a single history is the one-row case.  Surplus
components, either never seeded because the data has fewer distinct values
than ``K`` or starved during EM, carry weight zero and are pruned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, InvalidSamplingRate

SAMPLING_RATES = (0, 2, 4, 8)
VARIANCE_FLOOR = 1e-4
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class IntensityGMM:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float = np.nan

    @property
    def K(self) -> int:
        return len(self.weights)


@dataclass
class IntensityField:
    """Fitted mixtures for every grid cell, padded to ``K`` components.

    Dead components have weight 0; cells without data have all weights 0.
    """
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.weights.shape[0]

    def cell(self, c: int) -> IntensityGMM:
        alive = self.weights[c] > 0
        return IntensityGMM(self.weights[c, alive].copy(), self.means[c, alive].copy(),
                            self.variances[c, alive].copy())

    def point_weights(self, cells: np.ndarray, intensity: np.ndarray, sampling_rate: float) -> np.ndarray:
        """Vectorized point weights for returns landing in ``cells``.

        Cells without a fitted mixture yield weight 1.
        """
        check_sampling_rate(sampling_rate)
        cells = np.asarray(cells, dtype=np.int64)
        if sampling_rate == 0 or len(cells) == 0:
            return np.ones(len(cells))
        w, m, v = self.weights[cells], self.means[cells], self.variances[cells]
        comp = _argmax_component(w, m, v, np.asarray(intensity, dtype=np.float64))
        wk = np.take_along_axis(w, comp[:, None], axis=1)[:, 0]
        return 1.0 + sampling_rate * wk


def check_sampling_rate(rate) -> None:
    if rate not in SAMPLING_RATES:
        raise InvalidSamplingRate(f"sampling rate must be one of {SAMPLING_RATES}, got {rate!r}")


def _log_component_density(x, weights, means, variances):
    """log(w_k N(x | mu_k, var_k)) with -inf for dead components; x is (..., N)."""
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    var = np.where(weights > 0, variances, 1.0)
    d = x[..., :, None] - means[..., None, :]
    out = logw[..., None, :] - 0.5 * (_LOG2PI + np.log(var)[..., None, :] + d * d / var[..., None, :])
    return np.where(weights[..., None, :] > 0, out, -np.inf)


def _argmax_component(weights, means, variances, x):
    """Per-row argmax of w_k N(x|.) for rows of mixtures and one x per row; ties go to the lowest id."""
    lp = _log_component_density(x[:, None], weights, means, variances)[:, 0, :]
    return np.argmax(lp, axis=1)


def _compress(X):
    """Rows of samples (NaN = missing) -> padded distinct values and their counts."""
    C, N = X.shape
    S = np.sort(X, axis=1)
    valid = ~np.isnan(S)
    new = valid.copy()
    new[:, 1:] &= S[:, 1:] != S[:, :-1]
    rank = np.cumsum(new, axis=1) - 1
    D = max(int(new.sum(axis=1).max(initial=0)), 1)
    values = np.zeros((C, D))
    counts = np.zeros((C, D))
    r, c = np.nonzero(valid)
    values[r, rank[r, c]] = S[r, c]
    np.add.at(counts, (r, rank[r, c]), 1.0)
    return values, counts


def _seed(V, cnt, K, rng):
    """k-means++ seeding over each row's distinct values; returns means and alive mask."""
    C, D = V.shape
    means = np.zeros((C, K))
    alive = np.zeros((C, K), dtype=bool)
    valid = cnt > 0
    d2 = np.where(valid, 1.0, 0.0)
    for k in range(K):
        total = d2.sum(axis=1)
        ok = total > 0
        u = rng.random(C) * total
        pick = np.minimum((np.cumsum(d2, axis=1) <= u[:, None]).sum(axis=1), D - 1)
        chosen = V[np.arange(C), pick]
        means[ok, k] = chosen[ok]
        alive[ok, k] = True
        dist = (V - chosen[:, None]) ** 2
        d2 = np.where(ok[:, None], np.minimum(d2 if k else np.inf, dist), d2)
        d2 = np.where(valid, d2, 0.0)
    return means, alive


def _em(V, cnt, K, rng, max_iter, tol, var_floor, trace=False):
    """Batched EM over rows of distinct values ``V`` with multiplicities ``cnt``.

    Rows are grouped by how many distinct values they hold so short rows are
    not padded to the longest one; converged rows drop out of the batch.
    """
    C, D = V.shape
    n = cnt.sum(axis=1)
    means, alive = _seed(V, cnt, K, rng)
    mean_all = (cnt * V).sum(axis=1) / np.maximum(n, 1)
    var_all = np.maximum((cnt * (V - mean_all[:, None]) ** 2).sum(axis=1) / np.maximum(n, 1), var_floor)
    variances = np.repeat(var_all[:, None], K, axis=1)
    weights = alive / np.maximum(alive.sum(axis=1, keepdims=True), 1)
    ll = np.full(C, -np.inf)
    history = []

    width = (cnt > 0).sum(axis=1)
    rows = np.flatnonzero(n > 0)
    edges = np.unique(np.minimum(np.ceil(np.log2(np.maximum(width[rows], 1))), 10))
    for e in edges:
        grp = rows[np.minimum(np.ceil(np.log2(np.maximum(width[rows], 1))), 10) == e]
        d = int(width[grp].max())
        w, m, v, l, h = _em_rows(V[grp, :d], cnt[grp, :d], n[grp], weights[grp], means[grp], variances[grp],
                                 max_iter, tol, var_floor, trace)
        weights[grp], means[grp], variances[grp], ll[grp] = w, m, v, l
        history = h if trace and len(grp) == len(rows) else history
    weights /= np.maximum(weights.sum(axis=1, keepdims=True), 1e-300)
    weights[n == 0] = 0.0
    return weights, means, variances, ll, history


def _loglik_parts(V, w, m, v):
    """Component terms laid out (K, rows, values) so reductions over K stay contiguous."""
    with np.errstate(divide="ignore"):
        c0 = np.log(w) - 0.5 * (_LOG2PI + np.log(v))
    d = V[None, :, :] - m.T[:, :, None]
    d *= d
    d *= (-0.5 / v).T[:, :, None]
    d += c0.T[:, :, None]
    top = np.maximum.reduce(d, axis=0)
    d -= top
    np.exp(d, out=d)
    s = np.add.reduce(d, axis=0)
    return d, s, top + np.log(s)


def _em_rows(V, cnt, n, w, m, v, max_iter, tol, var_floor, trace):
    R = len(V)
    out_w, out_m, out_v, out_ll = w.copy(), m.copy(), v.copy(), np.full(R, -np.inf)
    idx = np.arange(R)
    ll = out_ll.copy()
    V2 = V * V
    history = []
    for _ in range(max_iter):
        if len(idx) == 0:
            break
        e, s, lse = _loglik_parts(V, w, m, v)
        new_ll = (cnt * lse).sum(axis=1) / n
        if trace:
            history.append(new_ll.copy())
        e *= cnt / s
        nk = np.einsum("krd->rk", e)
        live = nk > 1e-10 * n[:, None]
        nk_safe = np.where(live, nk, 1.0)
        mu = np.einsum("krd,rd->rk", e, V) / nk_safe
        var = np.einsum("krd,rd->rk", e, V2) / nk_safe - mu * mu
        w = np.where(live, nk / n[:, None], 0.0)
        m = np.where(live, mu, 0.0)
        v = np.maximum(np.where(live, var, var_floor), var_floor)
        conv = np.abs(new_ll - ll) < tol
        ll = new_ll
        done = idx[conv]
        out_w[done], out_m[done], out_v[done], out_ll[done] = w[conv], m[conv], v[conv], ll[conv]
        if conv.any():
            keep = ~conv
            idx, V, V2, cnt, n = idx[keep], V[keep], V2[keep], cnt[keep], n[keep]
            w, m, v, ll = w[keep], m[keep], v[keep], ll[keep]
    if len(idx):
        # rows that hit max_iter: likelihood after the last M-step
        ll = (cnt * _loglik_parts(V, w, m, v)[2]).sum(axis=1) / n
        if trace:
            history.append(ll.copy())
        out_w[idx], out_m[idx], out_v[idx], out_ll[idx] = w, m, v, ll
    return out_w, out_m, out_v, out_ll, history


def fit_intensity_field(samples: np.ndarray, K: int = 5, seed: int = 0, restarts: int = 1,
                        max_iter: int = 200, tol: float = 1e-6,
                        var_floor: float = VARIANCE_FLOOR) -> IntensityField:
    """Fit one mixture per row of ``samples`` (NaN marks missing entries).

    Each restart reseeds from the same generator; the restart with the best
    average log-likelihood is kept per cell.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be (cells, n)")
    V, cnt = _compress(X)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        w, m, v, ll, _ = _em(V, cnt, K, rng, max_iter, tol, var_floor)
        if best is None:
            best = [w, m, v, ll]
            continue
        better = ll > best[3]
        for i, arr in enumerate((w, m, v)):
            best[i][better] = arr[better]
        best[3] = np.where(better, ll, best[3])
    return IntensityField(*best[:3])


def fit_intensity_gmm(samples, K: int = 5, seed: int = 0, restarts: int = 1, max_iter: int = 200,
                      tol: float = 1e-6, var_floor: float = VARIANCE_FLOOR,
                      return_trace: bool = False):
    """Fit a ``K``-component mixture to one intensity history.

    With ``return_trace`` also returns the per-iteration average
    log-likelihood of the winning restart.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    x = x[~np.isnan(x)]
    if len(x) == 0:
        raise EmptyInput("intensity history is empty")
    V, cnt = _compress(x[None, :])
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        w, m, v, ll, hist = _em(V, cnt, K, rng, max_iter, tol, var_floor, trace=True)
        if best is None or ll[0] > best[3]:
            best = (w[0], m[0], v[0], ll[0], [float(h[0]) for h in hist])
    w, m, v, ll, hist = best
    alive = w > 0
    gmm = IntensityGMM(w[alive], m[alive], v[alive], float(ll))
    return (gmm, hist) if return_trace else gmm


def classify(gmm: IntensityGMM, intensity: float) -> int:
    """Component with the largest weighted density at ``intensity``; lowest id wins ties."""
    lp = _log_component_density(np.array([float(intensity)]), gmm.weights, gmm.means, gmm.variances)
    return int(np.argmax(lp[0]))


def point_weight(gmm: IntensityGMM, intensity: float, sampling_rate: int) -> float:
    check_sampling_rate(sampling_rate)
    if sampling_rate == 0:
        return 1.0
    return 1.0 + sampling_rate * float(gmm.weights[classify(gmm, intensity)])
