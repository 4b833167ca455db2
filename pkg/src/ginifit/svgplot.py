"""Deterministic SVG plot of an estimated J-function.

The output depends only on the numbers passed in: coordinates are written
with two decimals and no timestamps, fonts or scripts are embedded.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 64, 24, 24, 52
Y_CAP = 5.0

_STYLE = {
    "j-hat": 'stroke="#1f4e9c" stroke-width="2"',
    "theory": 'stroke="#c0392b" stroke-width="1.5" stroke-dasharray="6 4"',
    "reference": 'stroke="#555555" stroke-width="1"',
}


def _nice_step(span: float, target: int = 6) -> float:
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag + 1e-12:
            return m * mag
    return 10.0 * mag


def _y_top(*curves: np.ndarray) -> float:
    vals = np.concatenate([c[np.isfinite(c)] for c in curves] + [np.array([1.5])])
    top = min(float(vals.max()), Y_CAP)
    return math.ceil(top * 1.05 / 0.5) * 0.5


class _Frame:
    def __init__(self, r_max: float, y_max: float):
        self.r_max, self.y_max = r_max, y_max
        self.w = WIDTH - LEFT - RIGHT
        self.h = HEIGHT - TOP - BOTTOM

    def x(self, r: float) -> float:
        return LEFT + self.w * r / self.r_max

    def y(self, v: float) -> float:
        v = min(max(v, 0.0), self.y_max)
        return TOP + self.h * (1.0 - v / self.y_max)


def _path_data(frame: _Frame, r: np.ndarray, v: np.ndarray) -> str:
    """Polyline through finite values; a NaN starts a new subpath."""
    parts, pen_down = [], False
    for ri, vi in zip(r, v):
        if not math.isfinite(vi):
            pen_down = False
            continue
        parts.append(f"{'L' if pen_down else 'M'}{frame.x(ri):.2f},{frame.y(vi):.2f}")
        pen_down = True
    return " ".join(parts)


def _path(kind: str, d: str) -> str:
    return f'<path class="{kind}" d="{d}" fill="none" {_STYLE[kind]}/>'


def _fmt_tick(v: float) -> str:
    return f"{v:.10g}"


def render_j_plot(r: Sequence[float], j_hat: Sequence[float],
                  theory: Sequence[float] | None = None, title: str = "") -> str:
    """SVG text with the estimated curve, an optional model curve and the Poisson line J = 1.

    All curves are sampled on the same radial grid, so an estimate identical
    to 1 produces a path string identical to the reference line.
    """
    r = np.asarray(r, dtype=float)
    jh = np.asarray(j_hat, dtype=float)
    th = None if theory is None else np.asarray(theory, dtype=float)
    if r.shape != jh.shape or (th is not None and th.shape != r.shape):
        raise ValueError("curves must share the radial grid")
    r_max = float(r[-1])
    if not r_max > 0:
        raise ValueError("radial grid must extend beyond 0")
    frame = _Frame(r_max, _y_top(jh, *(() if th is None else (th,))))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>']
    if title:
        out.append(f'<title>{_escape(title)}</title>')
    x0, x1 = frame.x(0.0), frame.x(r_max)
    y0, y1 = frame.y(0.0), frame.y(frame.y_max)
    out.append(f'<line class="axis" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="#000000"/>')
    out.append(f'<line class="axis" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="#000000"/>')
    step = _nice_step(r_max)
    for k in range(int(math.floor(r_max / step + 1e-9)) + 1):
        xv = frame.x(k * step)
        out.append(f'<line class="tick" x1="{xv:.2f}" y1="{y0:.2f}" x2="{xv:.2f}" y2="{y0 + 5:.2f}" stroke="#000000"/>')
        out.append(f'<text x="{xv:.2f}" y="{y0 + 18:.2f}" text-anchor="middle">{_fmt_tick(k * step)}</text>')
    ystep = _nice_step(frame.y_max, 5)
    for k in range(int(math.floor(frame.y_max / ystep + 1e-9)) + 1):
        yv = frame.y(k * ystep)
        out.append(f'<line class="tick" x1="{x0 - 5:.2f}" y1="{yv:.2f}" x2="{x0:.2f}" y2="{yv:.2f}" stroke="#000000"/>')
        out.append(f'<text x="{x0 - 8:.2f}" y="{yv + 4:.2f}" text-anchor="end">{_fmt_tick(k * ystep)}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">r (m)</text>')
    out.append(f'<text x="16" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">J(r)</text>')
    out.append(_path("reference", _path_data(frame, r, np.ones_like(r))))
    if th is not None:
        out.append(_path("theory", _path_data(frame, r, th)))
    out.append(_path("j-hat", _path_data(frame, r, jh)))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
