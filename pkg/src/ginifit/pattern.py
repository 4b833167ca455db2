"""Finite point patterns observed through a window."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .geometry import Window


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Points as an ``(n, 2)`` float array plus the window they were observed in."""

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        if len(pts) and not np.all(self.window.contains(pts)):
            raise ValueError("pattern has points outside its window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def translated(self, dx: float, dy: float) -> PointPattern:
        return PointPattern(self.points + np.array([dx, dy]), self.window.translated(dx, dy))

    def scaled(self, s: float) -> PointPattern:
        return PointPattern(self.points * s, self.window.scaled(s))


def write_points_csv(pattern: PointPattern, fh: TextIO) -> None:
    """Write ``x_m,y_m`` rows with 6 decimals."""
    fh.write("x_m,y_m\n")
    for x, y in pattern.points:
        fh.write(f"{x:.6f},{y:.6f}\n")


def points_csv_text(pattern: PointPattern) -> str:
    buf = io.StringIO()
    write_points_csv(pattern, buf)
    return buf.getvalue()


def read_points_csv(fh: TextIO) -> np.ndarray:
    """Parse an ``x_m,y_m`` CSV; raises ValueError naming the offending line."""
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError("points CSV is empty (no header)") from None
    if header[:2] != ["x_m", "y_m"]:
        raise ValueError(f"line 1: expected header x_m,y_m, got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rows.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: cannot parse point {row!r}") from None
    return np.array(rows, dtype=float).reshape(-1, 2)
