"""Weighted Dirichlet-process Gaussian mixture for a single grid cell.

Training is a single streaming pass of hard MAP seating in the Chinese
restaurant process: a return either joins the table maximizing
``s_t * T_t(x)`` or opens a new one scored by ``alpha * T_0(x)``, where
``T`` is the Student-t posterior predictive of the table's NIW posterior and
``s_t`` its accumulated point weight.  No-return firings feed a separate
Bernoulli mass.  :func:`gibbs_refine` optionally resamples buffered
assignments offline.

:class:`lidarbg.background.DPGMMField` runs the same rules for every cell of
the grid at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import niw
from .errors import DomainError, EmptyModel, NoHistory, NonFiniteObservation
from .niw import NIWPrior

DEFAULT_ALPHA = 1.0
DEFAULT_CAP = 10
DEFAULT_P_B = 0.5


class Label(str, Enum):
    BACKGROUND = "Background"
    FOREGROUND = "Foreground"


# -- DP constructions --------------------------------------------------------

def stick_breaking(betas: Sequence[float]):
    """Mixing proportions from stick fractions; returns (pi, remaining stick)."""
    b = np.asarray(betas, dtype=np.float64)
    if np.any(~((b > 0) & (b < 1))):
        raise DomainError("stick fractions must lie in (0, 1)")
    left = np.concatenate([[1.0], np.cumprod(1.0 - b)])
    return b * left[:-1], float(left[-1])


def occupation_pmf(counts: Sequence[int], pi: Sequence[float]) -> float:
    """Multinomial probability of the occupation numbers ``counts`` under ``pi``."""
    n = np.asarray(counts)
    p = np.asarray(pi, dtype=np.float64)
    if n.shape != p.shape or np.any(n < 0) or np.any(n != np.floor(n)):
        raise DomainError("counts must be non-negative integers, one per component")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("pi must be a probability vector")
    log_coef = gammaln(n.sum() + 1) - gammaln(n + 1).sum()
    if np.any((p == 0) & (n > 0)):
        return 0.0
    with np.errstate(divide="ignore"):
        log_terms = np.where(n > 0, n * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(math.exp(log_coef + log_terms.sum()))


# -- tables and model ------------------------------------------------------

@dataclass
class MixtureTable:
    weight: float
    mean: np.ndarray
    scatter: np.ndarray
    created: int

    @classmethod
    def empty(cls, created: int) -> "MixtureTable":
        return cls(0.0, np.zeros(niw.DIM), np.zeros((niw.DIM, niw.DIM)), created)

    def add(self, x, w):
        self.weight, self.mean, self.scatter = niw.add_point(self.weight, self.mean, self.scatter, x, w)

    def remove(self, x, w):
        self.weight, self.mean, self.scatter = niw.remove_point(self.weight, self.mean, self.scatter, x, w)

    def posterior(self, prior: NIWPrior):
        """(kappa, nu, mu, psi); ``nu`` and ``kappa`` play the roles of n_t and k_t."""
        return niw.posterior(self.weight, self.mean, self.scatter, prior.mu0, prior.kappa0,
                             prior.nu0, prior.psi0)


def prior_posterior(prior: NIWPrior):
    return prior.kappa0, prior.nu0, prior.mu0, prior.psi0


def log_predictive_density(params_or_table, x, prior: Optional[NIWPrior] = None) -> float:
    if isinstance(params_or_table, MixtureTable):
        params = params_or_table.posterior(prior)
    elif isinstance(params_or_table, NIWPrior):
        params = prior_posterior(params_or_table)
    else:
        params = params_or_table
    return float(niw.log_predictive(np.asarray(x, dtype=np.float64), *params))


def predictive_density(params_or_table, x, prior: Optional[NIWPrior] = None) -> float:
    """Student-t posterior predictive density of a table (or of the prior itself)."""
    return math.exp(log_predictive_density(params_or_table, x, prior))


@dataclass
class BgDecision:
    p_background: float
    label: Label


@dataclass
class GridDPGMM:
    prior: NIWPrior
    alpha: float = DEFAULT_ALPHA
    cap: int = DEFAULT_CAP
    tables: List[MixtureTable] = field(default_factory=list)
    no_return_weight: float = 0.0
    total_weight: float = 0.0
    keep_history: bool = False
    history: list = field(default_factory=list)
    _clock: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")
        if self.cap < 1:
            raise DomainError("cap must be at least 1")

    # scoring
    def seat_scores(self, x) -> np.ndarray:
        """Log seating scores: one per existing table, then the new-table score last."""
        x = np.asarray(x, dtype=np.float64)
        out = [math.log(t.weight) + log_predictive_density(t, x, self.prior) for t in self.tables]
        out.append(math.log(self.alpha) + log_predictive_density(self.prior, x))
        return np.array(out)

    def _new_table(self, x, w) -> Optional[MixtureTable]:
        t = MixtureTable.empty(self._clock)
        t.add(x, w)
        self.tables.append(t)
        if len(self.tables) > self.cap:
            victim = min(self.tables, key=lambda s: (s.weight, s.created))
            self.tables.remove(victim)
            if self.keep_history:
                self.history = [h for h in self.history if h[2] is not victim]
            if victim is t:
                return None
        return t

    def update(self, x, weight: float = 1.0) -> "GridDPGMM":
        """Absorb one observation; ``x=None`` is a no-return firing."""
        w = float(weight)
        if not (np.isfinite(w) and w > 0):
            raise NonFiniteObservation(f"weight must be positive and finite, got {weight!r}")
        self._clock += 1
        self.total_weight += w
        if x is None:
            self.no_return_weight += w
            return self
        x = np.asarray(x, dtype=np.float64).reshape(niw.DIM)
        if not np.all(np.isfinite(x)):
            raise NonFiniteObservation(f"non-finite observation {x!r}")
        if not self.tables:
            table = self._new_table(x, w)
        else:
            k = int(np.argmax(self.seat_scores(x)))
            if k == len(self.tables):
                table = self._new_table(x, w)
            else:
                table = self.tables[k]
                table.add(x, w)
        if self.keep_history and table is not None:
            self.history.append([x, w, table])
        return self

    # inference
    def mixture_weights(self) -> np.ndarray:
        s = np.array([t.weight for t in self.tables])
        return s / s.sum()

    def log_prob_x_given_background(self, x) -> float:
        if not self.tables:
            raise EmptyModel("model has no tables")
        x = np.asarray(x, dtype=np.float64)
        logs = [math.log(p) + log_predictive_density(t, x, self.prior)
                for p, t in zip(self.mixture_weights(), self.tables)]
        return float(logsumexp(logs))

    def log_posterior(self) -> float:
        """Log joint of the buffered seating: CRP prior plus per-table evidence."""
        p = self.prior
        total = niw.crp_log_prior([t.weight for t in self.tables], self.alpha)
        for t in self.tables:
            kappa, nu, _, psi = t.posterior(p)
            total += niw.log_marginal_likelihood(t.weight, kappa, nu, psi, p.kappa0, p.nu0, p.psi0)
        return float(total)


def update(model: GridDPGMM, obs, weight: float = 1.0) -> GridDPGMM:
    return model.update(obs, weight)


def prob_x_given_background(model: GridDPGMM, x) -> float:
    """Mixture of table predictives weighted by ``s_t / sum(s)``."""
    return math.exp(model.log_prob_x_given_background(x))


def background_probability(px_b, p_b: float = DEFAULT_P_B, normalized: bool = False):
    """Posterior background probability from P(x|B), with P(x|F) = 1.

    The default keeps the denominator ``P(x|B) + P(x|F)``; ``normalized``
    uses ``P(x|B) P(B) + P(x|F) (1 - P(B))``.
    """
    px_b = np.asarray(px_b, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        if normalized:
            out = px_b * p_b / (px_b * p_b + (1.0 - p_b))
        else:
            out = px_b * p_b / (px_b + 1.0)
    limit = 1.0 if normalized else p_b
    out = np.where(np.isinf(px_b), limit, out)
    return float(out) if out.ndim == 0 else out


def default_level(p_b: float, normalized: bool) -> float:
    return 0.5 if normalized else p_b / 2.0


def classify(model: GridDPGMM, obs, p_b: float = DEFAULT_P_B, level: Optional[float] = None,
             normalized: bool = False) -> BgDecision:
    """Background/foreground decision for one observation (``None`` = no return)."""
    if not 0.0 < p_b < 1.0:
        raise DomainError("P(B) must lie in (0, 1)")
    if obs is None:
        if model.total_weight <= 0:
            raise EmptyModel("model has seen no observations")
        frac = model.no_return_weight / model.total_weight
        return BgDecision(frac, Label.BACKGROUND if frac >= 0.5 else Label.FOREGROUND)
    px_b = prob_x_given_background(model, obs)
    p = background_probability(px_b, p_b, normalized)
    tau = default_level(p_b, normalized) if level is None else level
    return BgDecision(p, Label.BACKGROUND if p >= tau else Label.FOREGROUND)


def gibbs_refine(model: GridDPGMM, sweeps: int, seed: int = 0) -> List[float]:
    """Resample buffered assignments from their full CRP conditionals.

    Each point leaves its table and is reseated with probability
    proportional to ``s_t * T_t(x)`` (``alpha * T_0(x)`` for a new table,
    unavailable when the cell is at its table cap).  Returns the log
    posterior after every sweep.
    """
    if not model.keep_history:
        raise NoHistory("model was trained without a history buffer")
    rng = np.random.default_rng(seed)
    trace = []
    for _ in range(sweeps):
        for entry in model.history:
            x, w, table = entry
            table.remove(x, w)
            if table.weight <= 0.0:
                model.tables.remove(table)
            scores = model.seat_scores(x) if model.tables else \
                np.array([math.log(model.alpha) + log_predictive_density(model.prior, x)])
            if len(model.tables) >= model.cap:
                scores = scores[:-1]
            probs = np.exp(scores - logsumexp(scores))
            k = int(rng.choice(len(probs), p=probs / probs.sum()))
            if k == len(model.tables):
                model._clock += 1
                table = MixtureTable.empty(model._clock)
                model.tables.append(table)
            else:
                table = model.tables[k]
            table.add(x, w)
            entry[2] = table
        trace.append(model.log_posterior())
    return trace


def seating_conditional(model: GridDPGMM, x) -> np.ndarray:
    """Normalized seating probabilities for ``x`` against the current tables."""
    s = model.seat_scores(x)
    return np.exp(s - logsumexp(s))
