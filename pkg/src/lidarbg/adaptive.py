"""Real-time adaptive finite GMM background model (isotropic components).

Classic online mixture update per cell: an observation matches the nearest
live component within ``match_sigma`` standard deviations; weights follow
``w <- (1 - lambda) w + lambda M``; the matched component's mean and
variance move with rate ``lambda / w``.  Unmatched observations replace the
lightest component.  Components ranked by ``w / sigma`` form the background
as the shortest prefix whose weight fraction exceeds ``T``.

A fresh cell holds one placeholder component carrying all the weight; it
never matches and sinks as real components gain weight, so a constant
stream gives the matched weight ``1 - (1 - lambda)^n`` after ``n`` frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteObservation


@dataclass(frozen=True)
class AdaptiveConfig:
    K: int = 5
    learning_rate: float = 0.01
    background_portion: float = 0.8
    match_sigma: float = 2.5
    initial_variance: float = 1.0
    variance_floor: float = 1e-4
    bootstrap_frames: int = 50
    weighted: bool = False


_STATE = ("weight", "mean", "variance", "live", "seen", "no_return_weight", "total_weight")


class AdaptiveField:
    def __init__(self, n_cells: int, config: AdaptiveConfig = AdaptiveConfig()):
        self.n_cells, self.config = int(n_cells), config
        C, K = self.n_cells, config.K
        self.weight = np.zeros((C, K))
        self.weight[:, 0] = 1.0
        self.mean = np.zeros((C, K, 3))
        self.variance = np.full((C, K), config.initial_variance)
        self.live = np.zeros((C, K), dtype=bool)
        self.seen = np.zeros(C, dtype=np.int64)
        self.no_return_weight = np.zeros(C)
        self.total_weight = np.zeros(C)

    # -- classification helpers -------------------------------------------
    def _match(self, cells, x):
        d2 = ((x[:, None, :] - self.mean[cells]) ** 2).sum(axis=2) / self.variance[cells]
        ok = self.live[cells] & (d2 <= self.config.match_sigma ** 2)
        d2 = np.where(ok, d2, np.inf)
        k = np.argmin(d2, axis=1)
        return ok.any(axis=1), k

    def background_components(self, cells):
        """(cells, K) mask of components in the background prefix."""
        w = self.weight[cells]
        ratio = np.where(self.live[cells], w / np.sqrt(self.variance[cells]), -np.inf)
        order = np.lexsort((-w, -ratio), axis=1)
        ws = np.take_along_axis(w, order, axis=1)
        tot = ws.sum(axis=1, keepdims=True)
        before = (np.cumsum(ws, axis=1) - ws) / np.where(tot > 0, tot, 1.0)
        in_bg_sorted = before <= self.config.background_portion
        out = np.zeros_like(in_bg_sorted)
        np.put_along_axis(out, order, in_bg_sorted, axis=1)
        return out & self.live[cells]

    def _in_background(self, cells, k):
        """Whether component ``k[i]`` of ``cells[i]`` lies in the background prefix.

        Same ranking as ``background_components`` without sorting every row.
        """
        rows = np.arange(len(cells))
        w = self.weight[cells]
        live = self.live[cells]
        ratio = np.where(live, w / np.sqrt(self.variance[cells]), -np.inf)
        rk, wk = ratio[rows, k][:, None], w[rows, k][:, None]
        idx = np.arange(w.shape[1])[None, :]
        ahead = (ratio > rk) | ((ratio == rk) & ((w > wk) | ((w == wk) & (idx < k[:, None]))))
        before = np.where(ahead, w, 0.0).sum(axis=1)
        tot = w.sum(axis=1)
        before = before / np.where(tot > 0, tot, 1.0)
        return (before <= self.config.background_portion) & live[rows, k]

    def classify(self, cells, xyz):
        """Read-only labels (True = background) for returns in ``cells``."""
        cells = np.asarray(cells, dtype=np.int64)
        xyz = np.asarray(xyz, dtype=np.float64).reshape(len(cells), 3)
        matched, k = self._match(cells, xyz)
        bg = self._in_background(cells, k)
        return (matched & bg) | (self.seen[cells] < self.config.bootstrap_frames)

    def classify_no_return(self, cells):
        tot = self.total_weight[cells]
        frac = np.divide(self.no_return_weight[cells], tot, out=np.zeros(len(cells)), where=tot > 0)
        return (frac >= 0.5) | (self.seen[cells] < self.config.bootstrap_frames)

    # -- update ------------------------------------------------------------
    def update_and_classify(self, cells, xyz, returned=None, weights=None):
        """Label one observation per listed cell, then fold it into the model.

        Returns a boolean array (True = background).  The label uses the
        post-update ranking.  ``weights`` (intensity-derived) are applied
        only when the config enables weighted updates.
        """
        cfg = self.config
        cells = np.asarray(cells, dtype=np.int64)
        xyz = np.asarray(xyz, dtype=np.float64).reshape(len(cells), 3)
        if returned is None:
            returned = ~np.isnan(xyz).any(axis=1)
        returned = np.asarray(returned, dtype=bool)
        if np.any(~np.isfinite(xyz[returned])):
            raise NonFiniteObservation("non-finite coordinates in a return")
        lam = np.full(len(cells), float(cfg.learning_rate))
        obs_w = np.ones(len(cells))
        if cfg.weighted and weights is not None:
            obs_w = np.asarray(weights, dtype=np.float64)
            lam = 1.0 - (1.0 - lam) ** obs_w
        labels = np.zeros(len(cells), dtype=bool)
        boot = self.seen[cells] < cfg.bootstrap_frames

        if cfg.learning_rate == 0.0:
            labels[returned] = self.classify(cells[returned], xyz[returned])
            labels[~returned] = self.classify_no_return(cells[~returned])
            return labels

        nr = ~returned
        cn = cells[nr]
        self.no_return_weight[cn] += obs_w[nr]
        self.total_weight[cells] += obs_w
        self.seen[cells] += 1
        labels[nr] = self.classify_no_return(cn) | boot[nr]

        c, x, lr = cells[returned], xyz[returned], lam[returned]
        if len(c):
            matched, k = self._match(c, x)
            w = self.weight[c] * (1.0 - lr)[:, None]

            # matched: reinforce and move the component
            mi = np.flatnonzero(matched)
            km = k[mi]
            w[mi, km] += lr[mi]
            rho = np.minimum(lr[mi] / w[mi, km], 1.0)
            mu = self.mean[c[mi], km]
            mu = mu + rho[:, None] * (x[mi] - mu)
            dist2 = ((x[mi] - mu) ** 2).sum(axis=1) / 3.0
            var = (1.0 - rho) * self.variance[c[mi], km] + rho * dist2
            self.mean[c[mi], km] = mu
            self.variance[c[mi], km] = np.maximum(var, cfg.variance_floor)

            # unmatched: replace the lightest component
            ui = np.flatnonzero(~matched)
            j = np.argmin(w[ui], axis=1)
            w[ui, j] = lr[ui]
            self.mean[c[ui], j] = x[ui]
            self.variance[c[ui], j] = cfg.initial_variance
            self.live[c[ui], j] = True

            w /= w.sum(axis=1, keepdims=True)
            self.weight[c] = w
            chosen = np.where(matched, k, 0)
            chosen[ui] = j
            bg = self._in_background(c, chosen)
            labels[returned] = (matched & bg) | boot[returned]
        return labels

    # -- persistence -------------------------------------------------------
    def state(self) -> dict:
        return {k: getattr(self, k) for k in _STATE}

    def params(self) -> dict:
        return {"n_cells": self.n_cells, **self.config.__dict__}

    @classmethod
    def from_state(cls, params: dict, arrays: dict) -> "AdaptiveField":
        params = dict(params)
        n = params.pop("n_cells")
        f = cls(n, AdaptiveConfig(**params))
        for k in _STATE:
            setattr(f, k, np.array(arrays[k], dtype=getattr(f, k).dtype).reshape(getattr(f, k).shape))
        return f


class AdaptiveCell:
    """Single-cell view over a one-cell :class:`AdaptiveField`."""

    def __init__(self, config: AdaptiveConfig = AdaptiveConfig()):
        self.field = AdaptiveField(1, config)

    @property
    def weights(self) -> np.ndarray:
        return self.field.weight[0].copy()

    @property
    def means(self) -> np.ndarray:
        return self.field.mean[0].copy()

    @property
    def variances(self) -> np.ndarray:
        return self.field.variance[0].copy()

    def update_and_classify(self, obs, weight: float = 1.0) -> bool:
        """True when ``obs`` (xyz, or ``None`` for no return) is labeled background."""
        x = np.full((1, 3), np.nan) if obs is None else np.asarray(obs, dtype=np.float64).reshape(1, 3)
        if obs is not None and not np.all(np.isfinite(x)):
            raise NonFiniteObservation(f"non-finite observation {obs!r}")
        return bool(self.field.update_and_classify([0], x, [obs is not None], [weight])[0])


def update_and_classify(cell: AdaptiveCell, obs, weight: float = 1.0):
    label = cell.update_and_classify(obs, weight)
    return label, cell
