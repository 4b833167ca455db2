"""Planar observation windows, lattice test locations and lon/lat projection.

Coordinates are meters in a local east/north frame. Windows are closed sets:
a point on the boundary is inside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class GeometryError(ValueError):
    """Invalid window geometry or a query outside the window."""


def _as_points(p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 2:
        raise GeometryError(f"points must have shape (n, 2), got {arr.shape}")
    return arr, single


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p1, p2, q1):
        return True
    if o2 == 0 and on_segment(p1, p2, q2):
        return True
    if o3 == 0 and on_segment(q1, q2, p1):
        return True
    if o4 == 0 and on_segment(q1, q2, p2):
        return True
    return False


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("rectangle bounds must be finite")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GeometryError(f"degenerate rectangle {vals}")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def vertices(self) -> np.ndarray:
        return np.array([[self.x0, self.y0], [self.x1, self.y0],
                         [self.x1, self.y1], [self.x0, self.y1]])

    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def centroid(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, p):
        pts, single = _as_points(p)
        x, y = pts[:, 0], pts[:, 1]
        inside = (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)
        return bool(inside[0]) if single else inside

    def _edge_distance(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        return np.minimum.reduce([x - self.x0, self.x1 - x, y - self.y0, self.y1 - y])

    def translated(self, dx: float, dy: float) -> Rectangle:
        return Rectangle(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def scaled(self, s: float) -> Rectangle:
        return Rectangle(self.x0 * s, self.y0 * s, self.x1 * s, self.y1 * s)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon given by its ordered vertices (either orientation).

    The closing edge from the last vertex back to the first is implicit.
    """

    vertices: tuple[tuple[float, float], ...]

    def __init__(self, vertices: Sequence[Sequence[float]]):
        verts = tuple((float(x), float(y)) for x, y in vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        object.__setattr__(self, "vertices", verts)
        self._validate()

    def _validate(self):
        v = self.vertices
        if len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        if not all(math.isfinite(c) for xy in v for c in xy):
            raise GeometryError("polygon vertices must be finite")
        if self.area() <= 0:
            raise GeometryError("polygon has zero area")
        n = len(v)
        for i in range(n):
            a1, a2 = v[i], v[(i + 1) % n]
            for j in range(i + 1, n):
                # adjacent edges share a vertex by construction
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(a1, a2, v[j], v[(j + 1) % n]):
                    raise GeometryError(f"polygon is self-intersecting (edges {i} and {j})")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        a = self.array
        return (a[:, 0].min(), a[:, 1].min(), a[:, 0].max(), a[:, 1].max())

    def _signed_area(self) -> float:
        a = self.array
        x, y = a[:, 0], a[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def area(self) -> float:
        return abs(self._signed_area())

    def centroid(self) -> tuple[float, float]:
        a = self.array
        x, y = a[:, 0], a[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        s = 3.0 * cross.sum()
        return (float(((x + xn) * cross).sum() / s), float(((y + yn) * cross).sum() / s))

    def _edges(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.array
        return a, np.roll(a, -1, axis=0)

    def _segment_distance(self, pts: np.ndarray) -> np.ndarray:
        start, end = self._edges()
        d = end - start                                   # (E, 2)
        rel = pts[:, None, :] - start[None, :, :]         # (n, E, 2)
        t = np.clip((rel * d).sum(-1) / (d * d).sum(-1), 0.0, 1.0)
        diff = rel - t[..., None] * d
        return np.sqrt((diff * diff).sum(-1)).min(axis=1)

    def contains(self, p):
        pts, single = _as_points(p)
        start, end = self._edges()
        x, y = pts[:, 0:1], pts[:, 1:2]
        xa, ya, xb, yb = start[:, 0], start[:, 1], end[:, 0], end[:, 1]
        crosses = (ya > y) != (yb > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = xa + (y - ya) * (xb - xa) / (yb - ya)
        inside = (np.count_nonzero(crosses & (x < x_int), axis=1) % 2) == 1
        x0, y0, x1, y1 = self.bbox
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        inside |= self._segment_distance(pts) <= tol
        return bool(inside[0]) if single else inside

    def _edge_distance(self, pts: np.ndarray) -> np.ndarray:
        return self._segment_distance(pts)

    def translated(self, dx: float, dy: float) -> Polygon:
        return Polygon([(x + dx, y + dy) for x, y in self.vertices])

    def scaled(self, s: float) -> Polygon:
        return Polygon([(x * s, y * s) for x, y in self.vertices])


Window = Union[Rectangle, Polygon]


def area(w: Window) -> float:
    return w.area()


def contains(w: Window, p):
    """Closed-set membership; scalar for one point, boolean array for many."""
    return w.contains(p)


def boundary_distance(w: Window, p):
    """Euclidean distance from interior point(s) to the window boundary.

    Raises:
        GeometryError: if any point lies outside ``w``.
    """
    pts, single = _as_points(p)
    inside = np.atleast_1d(w.contains(pts))
    if not inside.all():
        bad = pts[~inside][0]
        raise GeometryError(f"point {tuple(bad)} lies outside the window")
    d = np.maximum(w._edge_distance(pts), 0.0)
    return float(d[0]) if single else d


def grid_points(w: Window, spacing: float) -> np.ndarray:
    """Row-major lattice inside ``w``, offset by half a spacing from the bbox corner."""
    if not spacing > 0:
        raise GeometryError("spacing must be positive")
    x0, y0, x1, y1 = w.bbox

    def axis(lo, hi):
        n = math.ceil((hi - lo - 0.5 * spacing) / spacing - 1e-9)
        return lo + spacing * (0.5 + np.arange(max(n, 0)))

    xs, ys = axis(x0, x1), axis(y0, y1)
    if xs.size == 0 or ys.size == 0:
        return np.empty((0, 2))
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[w.contains(pts)]


def extent(w: Window) -> float:
    """Longest side of the bounding box."""
    x0, y0, x1, y1 = w.bbox
    return max(x1 - x0, y1 - y0)


def circumradius(w: Window, center: tuple[float, float] | None = None) -> float:
    """Largest distance from ``center`` (default: centroid) to a window vertex."""
    cx, cy = w.centroid() if center is None else center
    v = w.vertices if isinstance(w, Rectangle) else w.array
    return float(np.hypot(v[:, 0] - cx, v[:, 1] - cy).max())


@dataclass(frozen=True)
class ProjectionRef:
    """Origin of the local equirectangular frame, in degrees."""

    lon0: float
    lat0: float

    def __post_init__(self):
        if not abs(self.lat0) < 90:
            raise GeometryError(f"reference latitude {self.lat0} out of range")


def project(lon, lat, ref: ProjectionRef):
    """Equirectangular lon/lat to meters around ``ref``; returns ``(x, y)``."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    k = EARTH_RADIUS_M * math.pi / 180.0
    x = k * math.cos(math.radians(ref.lat0)) * (lon - ref.lon0)
    y = k * (lat - ref.lat0)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def unproject(x, y, ref: ProjectionRef):
    """Inverse of :func:`project`; returns ``(lon, lat)`` in degrees."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = EARTH_RADIUS_M * math.pi / 180.0
    lon = ref.lon0 + x / (k * math.cos(math.radians(ref.lat0)))
    lat = ref.lat0 + y / k
    if lon.ndim == 0:
        return float(lon), float(lat)
    return lon, lat


def project_window(geo: Polygon, ref: ProjectionRef | None = None) -> tuple[Polygon, ProjectionRef]:
    """Project a lon/lat polygon to meters, by default around its own centroid."""
    if ref is None:
        lon0, lat0 = geo.centroid()
        ref = ProjectionRef(lon0, lat0)
    a = geo.array
    x, y = project(a[:, 0], a[:, 1], ref)
    return Polygon(np.column_stack([x, y])), ref
