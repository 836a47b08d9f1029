"""Normal-Inverse-Wishart conjugate algebra for 3-D observations.

Tables keep weighted sufficient statistics in centred form: total weight
``W``, weighted mean ``m`` and weighted scatter ``M2`` about that mean.  A
point with weight ``w`` contributes exactly like ``w`` copies of itself, so
integer weights reproduce repeated unit updates.

All functions broadcast over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, multigammaln

from .errors import DomainError

DIM = 3
REGULARIZATION = 1e-6
_EYE = np.eye(DIM)


@dataclass(frozen=True, eq=False)
class NIWPrior:
    mu0: np.ndarray
    kappa0: float = 0.1
    nu0: float = 5.0
    psi0: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "mu0", np.asarray(self.mu0, dtype=np.float64).reshape(DIM))
        psi = 0.05 * _EYE if self.psi0 is None else np.asarray(self.psi0, dtype=np.float64)
        object.__setattr__(self, "psi0", psi)
        if self.kappa0 <= 0:
            raise DomainError("kappa0 must be positive")
        if self.nu0 <= DIM - 1:
            raise DomainError(f"nu0 must exceed {DIM - 1}")
        if psi.shape != (DIM, DIM) or np.abs(psi - psi.T).max() > 1e-12:
            raise DomainError("psi0 must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(psi).min() <= 0:
            raise DomainError("psi0 must be positive definite")


def add_point(W, m, M2, x, w):
    """Weighted Welford update; returns new (W, m, M2)."""
    W = np.asarray(W, dtype=np.float64)
    W1 = W + w
    d = x - m
    frac = np.divide(w, W1, out=np.zeros_like(W1), where=W1 > 0)
    m1 = m + frac[..., None] * d
    M21 = M2 + (frac * W)[..., None, None] * d[..., :, None] * d[..., None, :]
    return W1, m1, M21


def remove_point(W, m, M2, x, w):
    """Inverse of :func:`add_point`."""
    W0 = W - w
    if W0 <= 1e-12:
        return 0.0, np.zeros(DIM), np.zeros((DIM, DIM))
    m0 = (W * m - w * x) / W0
    d = x - m0
    M20 = M2 - (w * W0 / W) * np.outer(d, d)
    return W0, m0, M20


def posterior(W, m, M2, mu0, kappa0, nu0, psi0):
    """NIW posterior (kappa, nu, mu, psi) from centred weighted statistics."""
    W = np.asarray(W, dtype=np.float64)
    kappa = kappa0 + W
    nu = nu0 + W
    mu = (kappa0 * mu0 + W[..., None] * m) / kappa[..., None]
    d = m - mu0
    psi = psi0 + M2 + (kappa0 * W / kappa)[..., None, None] * d[..., :, None] * d[..., None, :]
    return kappa, nu, mu, psi


def predictive_params(kappa, nu, mu, psi):
    """Student-t posterior predictive: (df, location, scale matrix)."""
    kappa, nu = np.asarray(kappa, dtype=np.float64), np.asarray(nu, dtype=np.float64)
    df = nu - DIM + 1
    scale = psi * ((kappa + 1) / (kappa * df))[..., None, None]
    return df, mu, scale


def predictive_cache(kappa, nu, mu, psi):
    """Precision matrix and log normalizer of the predictive, for repeated evaluation."""
    df, loc, scale = predictive_params(kappa, nu, mu, psi)
    scale = scale + REGULARIZATION * _EYE
    prec = np.linalg.inv(scale)
    _, logdet = np.linalg.slogdet(scale)
    lognorm = (gammaln((df + DIM) / 2) - gammaln(df / 2) - 0.5 * DIM * np.log(df * np.pi)
               - 0.5 * logdet)
    return df, loc, prec, lognorm


def log_t_cached(x, df, loc, prec, lognorm):
    d = x - loc
    maha = np.einsum("...i,...ij,...j->...", d, prec, d)
    return lognorm - 0.5 * (df + DIM) * np.log1p(maha / df)


def log_predictive(x, kappa, nu, mu, psi):
    return log_t_cached(x, *predictive_cache(kappa, nu, mu, psi))


def log_marginal_likelihood(W, kappa, nu, psi, kappa0, nu0, psi0):
    """Log evidence of a table's (weighted) data under the prior."""
    _, ld_n = np.linalg.slogdet(psi)
    _, ld_0 = np.linalg.slogdet(psi0)
    return (-0.5 * W * DIM * np.log(np.pi)
            + multigammaln(nu / 2, DIM) - multigammaln(nu0 / 2, DIM)
            + 0.5 * nu0 * ld_0 - 0.5 * nu * ld_n
            + 0.5 * DIM * (np.log(kappa0) - np.log(kappa)))


def crp_log_prior(table_weights, alpha):
    """Log probability of a seating arrangement (weights generalize counts via the gamma function)."""
    s = np.asarray(table_weights, dtype=np.float64)
    return (len(s) * np.log(alpha) + gammaln(s).sum() + gammaln(alpha) - gammaln(alpha + s.sum()))
