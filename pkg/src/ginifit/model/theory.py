"""Closed-form quantities of the beta-Ginibre point process.

The process has kernel

    K(x, y) = (c/pi) exp(-(c/2b)(|x|^2 + |y|^2)) exp((c/b) x conj(y))

with intensity ``c/pi`` and repulsion ``b`` in (0, 1]. Points in the plane
are handled as real pairs and mapped to complex numbers internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BETA_MAX = 1.2


@dataclass(frozen=True)
class GinibreParams:
    """Model parameters: ``c = lambda * pi`` (per m^2) and repulsion ``beta``."""

    c: float
    beta: float
    beta_max: float = BETA_MAX

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be positive, got {self.c}")
        if not (0 < self.beta <= self.beta_max):
            raise ValueError(f"beta must lie in (0, {self.beta_max}], got {self.beta}")

    @classmethod
    def from_intensity(cls, lam: float, beta: float, **kw) -> GinibreParams:
        """Build from intensity ``lam`` in points per m^2."""
        return cls(c=lam * math.pi, beta=beta, **kw)

    @property
    def intensity(self) -> float:
        return self.c / math.pi


def theoretical_J(r, params: GinibreParams):
    """``J(r) = 1 / (1 - beta + beta exp(-c r^2 / beta))``.

    For ``beta > 1`` the denominator vanishes at ``c r^2 = beta ln(beta/(beta-1))``;
    beyond that radius the value is negative and carries no probabilistic meaning.
    """
    r = np.asarray(r, dtype=float)
    b = params.beta
    with np.errstate(divide="ignore"):
        out = 1.0 / (1.0 - b + b * np.exp(-params.c * r * r / b))
    return float(out) if out.ndim == 0 else out


def pair_correlation(r, params: GinibreParams):
    """Pair correlation ``g(r) = 1 - exp(-c r^2 / beta)``."""
    r = np.asarray(r, dtype=float)
    out = -np.expm1(-params.c * r * r / params.beta)
    return float(out) if out.ndim == 0 else out


def kernel_matrix(points, params: GinibreParams) -> np.ndarray:
    """Hermitian matrix ``[K(x_i, x_j)]`` for points given as (k, 2) real pairs.

    Uses the factorisation |K(x, y)| = (c/pi) exp(-(c/2b)|x - y|^2), which avoids
    overflow of the separate exponentials far from the origin.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    z = pts[:, 0] + 1j * pts[:, 1]
    diff2 = np.abs(z[:, None] - z[None, :]) ** 2
    phase = (z[:, None] * np.conj(z[None, :])).imag
    a = params.c / params.beta
    return (params.c / math.pi) * np.exp(-0.5 * a * diff2 + 1j * a * phase)


def correlation_k(points, params: GinibreParams) -> float:
    """k-point correlation density ``det[K(x_i, x_j)]`` (per area^k).

    Raises:
        ValueError: on repeated points, where the joint density is undefined.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("correlation_k requires pairwise distinct points")
    if len(pts) == 0:
        return 1.0
    return float(np.linalg.det(kernel_matrix(pts, params)).real)


def _log_void_disc(x: float, beta: float, tol: float) -> float:
    """log of prod_{k>=1} (1 - beta P(k, x)) with P the regularized lower gamma.

    P(k+1, x) = P(k, x) - x^k e^{-x} / k! and its complement Q = 1 - P are run
    side by side; each factor is taken from whichever is not subject to
    cancellation. The product stops once a factor exceeds ``1 - tol``.
    """
    if x == 0.0:
        return 0.0
    log_x = math.log(x)
    log_q = -x                      # log Q(1, x)
    p = -math.expm1(-x)             # P(1, x)
    log_1mb = math.log1p(-beta) if beta < 1 else None
    total = 0.0
    k = 1
    while True:
        if p > 0.5:
            if beta < 1:
                lf = np.logaddexp(log_1mb, math.log(beta) + log_q)
            elif beta == 1:
                lf = log_q
            else:
                f = 1.0 - beta + beta * math.exp(log_q)
                if f <= 0:
                    return math.nan
                lf = math.log(f)
        else:
            f = -beta * p
            if f <= -1:
                return math.nan
            lf = math.log1p(f)
        total += lf
        if beta * p <= tol:
            return total
        log_t = k * log_x - x - math.lgamma(k + 1)
        log_q = float(np.logaddexp(log_q, log_t))
        p -= math.exp(log_t)
        k += 1


def void_probability_disc(r, params: GinibreParams, tol: float = 1e-12):
    """Probability that a disc of radius ``r`` contains no point.

    Computed as the product over kernel eigenvalues restricted to the disc,
    ``prod_k (1 - beta P(k, c r^2 / beta))``. Returns NaN for ``beta > 1``
    where a factor turns non-positive.
    """
    if not (0 < tol <= 1e-6):
        raise ValueError("tol must lie in (0, 1e-6]")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    flat = [math.exp(_log_void_disc(params.c * float(v) ** 2 / params.beta, params.beta, tol))
            for v in r.ravel()]
    out = np.array(flat).reshape(r.shape)
    return float(out) if out.ndim == 0 else out


def theoretical_F(r, params: GinibreParams, tol: float = 1e-12):
    """Empty-space distribution ``1 - P(no point within r)``."""
    return 1.0 - void_probability_disc(r, params, tol)


def theoretical_G(r, params: GinibreParams, tol: float = 1e-12):
    """Nearest-neighbour distribution implied by ``1 - G = J (1 - F)``."""
    return 1.0 - theoretical_J(r, params) * void_probability_disc(r, params, tol)
