"""Border-corrected (reduced-sample) estimators of G, F and J.

Each estimator only uses reference locations farther than ``r`` from the
window boundary. Undefined values (no uncensored location) are NaN, never
interpolated.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy.spatial import cKDTree

from .geometry import boundary_distance, extent, grid_points
from .pattern import PointPattern

J_GUARD = 1e-6
DEFAULT_R_MAX = 600.0
DEFAULT_STEPS = 512

SUMMARY_COLUMNS = ("r_m", "f_hat", "g_hat", "j_hat", "n_valid_f", "n_valid_g")


@dataclass(frozen=True, eq=False)
class RadialGrid:
    r_values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_values, dtype=float)
        if r.ndim != 1 or r.size < 2 or r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ValueError("radial grid must start at 0 and be strictly increasing")
        object.__setattr__(self, "r_values", r)

    @classmethod
    def uniform(cls, r_max: float = DEFAULT_R_MAX, steps: int = DEFAULT_STEPS) -> RadialGrid:
        """``steps`` equal steps from 0 to ``r_max`` (``steps + 1`` values)."""
        if not (r_max > 0 and steps >= 1):
            raise ValueError("need r_max > 0 and at least one step")
        return cls(np.linspace(0.0, r_max, steps + 1))

    @property
    def r_max(self) -> float:
        return float(self.r_values[-1])

    def __len__(self):
        return len(self.r_values)


@dataclass(frozen=True, eq=False)
class SummaryEstimate:
    """F, G and J estimates on a shared grid; NaN marks undefined values."""

    grid: RadialGrid
    f_hat: np.ndarray
    g_hat: np.ndarray
    j_hat: np.ndarray
    n_valid_f: np.ndarray
    n_valid_g: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return self.grid.r_values

    def to_csv(self, fh: TextIO) -> None:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in zip(self.r, self.f_hat, self.g_hat, self.j_hat, self.n_valid_f, self.n_valid_g):
            r, f, g, j, nf, ng = row
            fh.write(f"{_fmt(r)},{_fmt(f)},{_fmt(g)},{_fmt(j)},{int(nf)},{int(ng)}\n")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, fh: TextIO) -> SummaryEstimate:
        """Parse the CSV written by :meth:`to_csv`; errors name the line."""
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SUMMARY_COLUMNS:
            raise ValueError(f"line 1: expected header {','.join(SUMMARY_COLUMNS)}")
        cols: list[list[float]] = [[] for _ in SUMMARY_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SUMMARY_COLUMNS):
                raise ValueError(f"line {lineno}: expected {len(SUMMARY_COLUMNS)} fields")
            try:
                vals = [float(v) if v.strip() else math.nan for v in row]
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric field in {row!r}") from None
            if math.isnan(vals[0]):
                raise ValueError(f"line {lineno}: r_m is required")
            for col, v in zip(cols, vals):
                col.append(v)
        if len(cols[0]) < 2:
            raise ValueError("summary CSV needs at least two grid rows")
        try:
            grid = RadialGrid(np.array(cols[0]))
        except ValueError as exc:
            raise ValueError(f"invalid r_m column: {exc}") from None
        nf = np.nan_to_num(np.array(cols[4])).astype(np.int64)
        ng = np.nan_to_num(np.array(cols[5])).astype(np.int64)
        return cls(grid, np.array(cols[1]), np.array(cols[2]), np.array(cols[3]), nf, ng)


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def _border_cdf(dist: np.ndarray, bdist: np.ndarray, r: np.ndarray):
    """Reduced-sample CDF: #{dist <= r < bdist} / #{bdist > r} with exact counts."""
    n = len(dist)
    below = np.searchsorted(np.sort(dist), r, side="right")
    both = np.searchsorted(np.sort(np.maximum(dist, bdist)), r, side="right")
    valid = n - np.searchsorted(np.sort(bdist), r, side="right")
    num = below - both
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(valid > 0, num / np.maximum(valid, 1), np.nan)
    return value, valid


def nn_distances(p: PointPattern) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour distance and boundary distance of every point.

    Raises:
        ValueError: for fewer than two points.
    """
    if len(p) < 2:
        raise ValueError(f"nearest-neighbour distances need at least 2 points, got {len(p)}")
    d, _ = cKDTree(p.points).query(p.points, k=2)
    return d[:, 1], boundary_distance(p.window, p.points)


def estimate_G(p: PointPattern, grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Border-corrected nearest-neighbour distribution and its per-r point counts."""
    d, b = nn_distances(p)
    return _border_cdf(d, b, grid.r_values)


def default_spacing(p: PointPattern) -> float:
    return extent(p.window) / 100.0


def estimate_F(p: PointPattern, grid: RadialGrid,
               spacing: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Border-corrected empty-space distribution on a lattice of test locations."""
    if len(p) == 0:
        raise ValueError("empty-space function needs a nonempty pattern")
    if spacing is None:
        spacing = default_spacing(p)
    u = grid_points(p.window, spacing)
    if len(u) == 0:
        raise ValueError(f"test-grid spacing {spacing} leaves no location in the window")
    e, _ = cKDTree(p.points).query(u, k=1)
    return _border_cdf(e, boundary_distance(p.window, u), grid.r_values)


def estimate_J(p: PointPattern, grid: RadialGrid | None = None,
               spacing: float | None = None) -> SummaryEstimate:
    """F, G and ``J = (1 - G) / (1 - F)``, the latter only where ``F < 1 - 1e-6``."""
    if grid is None:
        grid = RadialGrid.uniform()
    g, ng = estimate_G(p, grid)
    f, nf = estimate_F(p, grid, spacing)
    ok = np.isfinite(f) & np.isfinite(g) & (f < 1.0 - J_GUARD)
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(ok, (1.0 - g) / (1.0 - f), np.nan)
    return SummaryEstimate(grid, f, g, j, nf, ng)
