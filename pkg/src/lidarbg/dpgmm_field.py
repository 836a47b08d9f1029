"""Grid-wide weighted DPGMM: the single-cell rules of :mod:`lidarbg.dpgmm`
applied to every cell of the grid with numpy batching.

Tables live in fixed slots ``(cells, cap)``; an empty slot has weight 0.
Per-slot predictive parameters (precision, log normalizer) are cached and
refreshed only for slots touched by an update.
"""
from __future__ import annotations

import numpy as np

from . import niw
from .dpgmm import DEFAULT_ALPHA, DEFAULT_CAP, GridDPGMM, MixtureTable
from .errors import DomainError, NonFiniteObservation
from .niw import NIWPrior

_STATE = ("weight", "mean", "scatter", "created", "mu0", "no_return_weight", "total_weight", "clock")


class DPGMMField:
    def __init__(self, n_cells: int, mu0=None, alpha: float = DEFAULT_ALPHA, cap: int = DEFAULT_CAP,
                 kappa0: float = 0.1, nu0: float = 5.0, psi0=None):
        if alpha <= 0:
            raise DomainError("alpha must be positive")
        self.n_cells, self.cap, self.alpha = int(n_cells), int(cap), float(alpha)
        NIWPrior(np.zeros(3), kappa0, nu0, psi0)  # validates the hyperparameters
        self.kappa0, self.nu0 = float(kappa0), float(nu0)
        self.psi0 = 0.05 * np.eye(3) if psi0 is None else np.asarray(psi0, dtype=np.float64)
        C, T = self.n_cells, self.cap
        self.mu0 = np.zeros((C, 3)) if mu0 is None else np.array(mu0, dtype=np.float64).reshape(C, 3)
        self.weight = np.zeros((C, T))
        self.mean = np.zeros((C, T, 3))
        self.scatter = np.zeros((C, T, 3, 3))
        self.created = np.full((C, T), -1, dtype=np.int64)
        self.no_return_weight = np.zeros(C)
        self.total_weight = np.zeros(C)
        self.clock = np.zeros(C, dtype=np.int64)
        self._init_cache()

    # -- caches ------------------------------------------------------------
    def _init_cache(self):
        C, T = self.n_cells, self.cap
        self.df = np.ones((C, T))
        self.loc = np.zeros((C, T, 3))
        self.prec = np.zeros((C, T, 3, 3))
        self.lognorm = np.zeros((C, T))
        df0, _, prec0, ln0 = niw.predictive_cache(self.kappa0, self.nu0, np.zeros(3), self.psi0)
        self.df0, self.prec0, self.lognorm0 = float(df0), prec0, float(ln0)
        live = np.argwhere(self.weight > 0)
        if len(live):
            self._refresh(live[:, 0], live[:, 1])

    def _refresh(self, c, t):
        kappa, nu, mu, psi = niw.posterior(self.weight[c, t], self.mean[c, t], self.scatter[c, t],
                                           self.mu0[c], self.kappa0, self.nu0, self.psi0)
        df, loc, prec, ln = niw.predictive_cache(kappa, nu, mu, psi)
        self.df[c, t], self.loc[c, t], self.prec[c, t], self.lognorm[c, t] = df, loc, prec, ln

    def prior(self, c: int) -> NIWPrior:
        return NIWPrior(self.mu0[c], self.kappa0, self.nu0, self.psi0)

    # -- scoring -----------------------------------------------------------
    def _log_t_tables(self, cells, x):
        d = x[:, None, :] - self.loc[cells]
        maha = np.einsum("pti,ptij,ptj->pt", d, self.prec[cells], d)
        df = self.df[cells]
        return self.lognorm[cells] - 0.5 * (df + 3) * np.log1p(maha / df)

    def _log_t_prior(self, cells, x):
        d = x - self.mu0[cells]
        maha = np.einsum("pi,ij,pj->p", d, self.prec0, d)
        return self.lognorm0 - 0.5 * (self.df0 + 3) * np.log1p(maha / self.df0)

    def seat_scores(self, cells, x):
        """(points, cap + 1) log seating scores; empty slots score -inf, new table is last."""
        with np.errstate(divide="ignore"):
            logw = np.log(self.weight[cells])
        exist = np.where(self.weight[cells] > 0, logw + self._log_t_tables(cells, x), -np.inf)
        new = np.log(self.alpha) + self._log_t_prior(cells, x)
        return np.concatenate([exist, new[:, None]], axis=1)

    # -- updates -----------------------------------------------------------
    def update(self, cells, xyz, weights, returned=None):
        """One observation for each listed cell (cells must be distinct).

        ``returned`` false (or NaN coordinates) marks a no-return firing.
        """
        cells = np.asarray(cells, dtype=np.int64)
        xyz = np.asarray(xyz, dtype=np.float64).reshape(len(cells), 3)
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64), cells.shape)
        if returned is None:
            returned = ~np.isnan(xyz).any(axis=1)
        returned = np.asarray(returned, dtype=bool)
        if np.any(~np.isfinite(w) | (w <= 0)):
            raise NonFiniteObservation("weights must be positive and finite")
        if np.any(~np.isfinite(xyz[returned])):
            raise NonFiniteObservation("non-finite coordinates in a return")
        if len(np.unique(cells)) != len(cells):
            raise ValueError("cells must be distinct within one update")
        self.clock[cells] += 1
        self.total_weight[cells] += w
        nr = cells[~returned]
        self.no_return_weight[nr] += w[~returned]

        c, x, wr = cells[returned], xyz[returned], w[returned]
        if len(c) == 0:
            return
        scores = self.seat_scores(c, x)
        choice = np.argmax(scores, axis=1)
        join = choice < self.cap
        slot = np.where(join, choice, -1)

        new = ~join
        if new.any():
            cn = c[new]
            W = self.weight[cn]
            empty = W <= 0
            has_empty = empty.any(axis=1)
            first_empty = np.argmax(empty, axis=1)
            # at cap: evict the lightest table (oldest on ties) unless the newcomer is lighter
            victim = _argmin_weight_then_age(W, self.created[cn])
            evict_ok = W[np.arange(len(cn)), victim] <= wr[new]
            s = np.where(has_empty, first_empty, np.where(evict_ok, victim, -1))
            slot[new] = s
            placed = s >= 0
            ci, si = cn[placed], s[placed]
            self.weight[ci, si] = 0.0
            self.mean[ci, si] = 0.0
            self.scatter[ci, si] = 0.0
            self.created[ci, si] = self.clock[ci]

        ok = slot >= 0
        c, s, x, wr = c[ok], slot[ok], x[ok], wr[ok]
        W1, m1, M21 = niw.add_point(self.weight[c, s], self.mean[c, s], self.scatter[c, s], x, wr)
        self.weight[c, s], self.mean[c, s], self.scatter[c, s] = W1, m1, M21
        self._refresh(c, s)

    def update_frame(self, returned, xyz, weights):
        """Feed a whole tensorized frame (flat ``(cells,)`` / ``(cells, 3)`` arrays)."""
        self.update(np.arange(self.n_cells), xyz, weights, returned)

    # -- inference ---------------------------------------------------------
    def log_px_background(self, cells, xyz, chunk: int = 65536):
        """log P(x|B) per point; -inf for cells that never saw a return."""
        cells = np.asarray(cells, dtype=np.int64)
        xyz = np.asarray(xyz, dtype=np.float64).reshape(len(cells), 3)
        out = np.empty(len(cells))
        for a in range(0, len(cells), chunk):
            c, x = cells[a:a + chunk], xyz[a:a + chunk]
            W = self.weight[c]
            tot = W.sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                lw = np.log(W) - np.log(tot)[:, None]
                terms = np.where(W > 0, lw + self._log_t_tables(c, x), -np.inf)
                top = terms.max(axis=1)
                safe = np.where(np.isfinite(top), top, 0.0)
                out[a:a + chunk] = np.where(np.isfinite(top),
                                            safe + np.log(np.exp(terms - safe[:, None]).sum(axis=1)),
                                            -np.inf)
        return out

    def no_return_fraction(self, cells):
        tot = self.total_weight[cells]
        return np.divide(self.no_return_weight[cells], tot, out=np.zeros(len(tot)), where=tot > 0)

    def table_counts(self):
        return (self.weight > 0).sum(axis=1)

    # -- conversion --------------------------------------------------------
    def cell_model(self, c: int) -> GridDPGMM:
        """Materialize one cell as a :class:`GridDPGMM` (tables in creation order)."""
        m = GridDPGMM(self.prior(c), self.alpha, self.cap)
        live = np.flatnonzero(self.weight[c] > 0)
        for t in live[np.argsort(self.created[c, live], kind="stable")]:
            m.tables.append(MixtureTable(float(self.weight[c, t]), self.mean[c, t].copy(),
                                         self.scatter[c, t].copy(), int(self.created[c, t])))
        m.no_return_weight = float(self.no_return_weight[c])
        m.total_weight = float(self.total_weight[c])
        m._clock = int(self.clock[c])
        return m

    def state(self) -> dict:
        return {k: getattr(self, k) for k in _STATE}

    def params(self) -> dict:
        return {"alpha": self.alpha, "cap": self.cap, "kappa0": self.kappa0, "nu0": self.nu0,
                "psi0": self.psi0.tolist(), "n_cells": self.n_cells}

    @classmethod
    def from_state(cls, params: dict, arrays: dict) -> "DPGMMField":
        f = cls(params["n_cells"], arrays["mu0"], params["alpha"], params["cap"], params["kappa0"],
                params["nu0"], np.asarray(params["psi0"]))
        for k in _STATE:
            setattr(f, k, np.array(arrays[k], dtype=getattr(f, k).dtype).reshape(getattr(f, k).shape))
        f._init_cache()
        return f


def _argmin_weight_then_age(W, created):
    """Row-wise index of the smallest weight, oldest creation breaking ties."""
    wmin = W.min(axis=1, keepdims=True)
    cand = W == wmin
    age = np.where(cand, created, np.iinfo(np.int64).max)
    return np.argmin(age, axis=1)
