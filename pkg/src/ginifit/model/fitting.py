"""Minimum-contrast fit of beta on the estimated J-function."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..pattern import PointPattern
from ..summaries import RadialGrid, SummaryEstimate, estimate_J
from .theory import BETA_MAX, GinibreParams, theoretical_J

DEFAULT_BETA_RANGE = (0.01, BETA_MAX)
MIN_GRID_VALUES = 10
SCAN_POINTS = 200
BETA_TOL = 1e-4
PER_KM2 = 1e6


class FitError(ValueError):
    """Too little usable data to fit."""


@dataclass(frozen=True)
class FitResult:
    beta_hat: float
    lambda_hat: float          # per m^2
    c_hat: float               # per m^2
    residual: float
    r_min: float
    r_max: float
    n_points: int
    n_grid_used: int

    @property
    def lambda_per_km2(self) -> float:
        return self.lambda_hat * PER_KM2

    @property
    def outside_thinning_range(self) -> bool:
        """beta above 1 fits J but no thinned Ginibre process produces it."""
        return self.beta_hat > 1.0

    def to_dict(self) -> dict:
        return {
            "beta": self.beta_hat,
            "lambda_per_km2": self.lambda_per_km2,
            "c_per_m2": self.c_hat,
            "residual": self.residual,
            "r_min_m": self.r_min,
            "r_max_m": self.r_max,
            "n_points": self.n_points,
            "n_grid_used": self.n_grid_used,
            "outside_thinning_range": self.outside_thinning_range,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FitResult:
        lam = float(d["lambda_per_km2"]) / PER_KM2
        return cls(beta_hat=float(d["beta"]), lambda_hat=lam,
                   c_hat=float(d.get("c_per_m2", lam * math.pi)),
                   residual=float(d.get("residual", math.nan)),
                   r_min=float(d.get("r_min_m", math.nan)), r_max=float(d.get("r_max_m", math.nan)),
                   n_points=int(d.get("n_points", 0)), n_grid_used=int(d.get("n_grid_used", 0)))

    def params(self) -> GinibreParams:
        return GinibreParams(self.c_hat, self.beta_hat)


def estimate_lambda(p: PointPattern) -> float:
    """Point count over window area, per m^2."""
    if len(p) == 0:
        raise ValueError("cannot estimate intensity of an empty pattern")
    return len(p) / p.window.area()


def implied_area_km2(n_points: int, lambda_per_km2: float) -> float:
    """Window area implied by a reported count and intensity, ``n / lambda``."""
    if not lambda_per_km2 > 0:
        raise ValueError("intensity must be positive")
    return n_points / lambda_per_km2


def golden_section(f: Callable[[float], float], a: float, b: float,
                   tol: float = BETA_TOL) -> float:
    """Minimiser of a unimodal ``f`` on ``[a, b]`` to bracket width ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def fit_beta(summary: SummaryEstimate, lambda_hat: float, r_min: float = 0.0,
             r_max: float | None = None, beta_range: tuple[float, float] = DEFAULT_BETA_RANGE,
             n_points: int = 0) -> FitResult:
    """Least-squares fit of ``theoretical_J`` to the estimated J with ``c = pi lambda_hat``.

    The loss uses every finite J value with ``r_min <= r <= r_max`` at equal
    weight. A 200-point log-spaced scan over ``beta_range`` locates the basin,
    golden-section search refines it to 1e-4.

    Raises:
        FitError: when fewer than 10 usable grid values remain.
    """
    lo, hi = beta_range
    if not (0 < lo < hi <= BETA_MAX):
        raise ValueError(f"beta_range must satisfy 0 < lo < hi <= {BETA_MAX}")
    if not lambda_hat > 0:
        raise ValueError("lambda_hat must be positive")
    r = summary.r
    if r_max is None:
        r_max = float(r[-1])
    use = np.isfinite(summary.j_hat) & (r >= r_min) & (r <= r_max)
    n_used = int(use.sum())
    if n_used < MIN_GRID_VALUES:
        raise FitError(f"only {n_used} defined J values in [{r_min}, {r_max}] m; "
                       f"need at least {MIN_GRID_VALUES}")
    rr, jj = r[use], summary.j_hat[use]
    c = math.pi * lambda_hat

    def loss(beta: float) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            model = theoretical_J(rr, GinibreParams(c, beta))
            val = float(np.sum((jj - model) ** 2))
        return val if math.isfinite(val) else math.inf

    scan = np.geomspace(lo, hi, SCAN_POINTS)
    losses = np.array([loss(b) for b in scan])
    if not np.isfinite(losses).any():
        raise FitError("loss is non-finite over the whole beta range")
    i = int(np.argmin(losses))
    a, b = scan[max(i - 1, 0)], scan[min(i + 1, SCAN_POINTS - 1)]
    beta = golden_section(loss, a, b)
    best, best_loss = (beta, loss(beta)) if loss(beta) <= losses[i] else (scan[i], losses[i])
    return FitResult(beta_hat=float(best), lambda_hat=lambda_hat, c_hat=c, residual=float(best_loss),
                     r_min=float(rr[0]), r_max=float(rr[-1]), n_points=n_points, n_grid_used=n_used)


def fit_pattern(p: PointPattern, grid: RadialGrid | None = None, spacing: float | None = None,
                r_min: float = 0.0, r_max: float | None = None,
                beta_range: tuple[float, float] = DEFAULT_BETA_RANGE) -> FitResult:
    """Estimate lambda and J from a pattern, then fit beta."""
    lam = estimate_lambda(p)
    summary = estimate_J(p, grid, spacing)
    return fit_beta(summary, lam, r_min, r_max, beta_range, n_points=len(p))
