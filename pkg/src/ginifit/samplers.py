"""Exact simulation of Poisson, truncated Ginibre and beta-Ginibre patterns.

The truncated Ginibre process is the rank-N projection DPP whose eigenfunctions
are ``phi_k(z) ~ (sqrt(c) z)^k / sqrt(k!) * exp(-c|z|^2 / 2)``. It is sampled
with the sequential (HKPV) chain rule: each new point is proposed from the
eigenfunction mixture and accepted with probability equal to the squared norm
of its feature vector projected onto the directions not yet spanned.
"""
from __future__ import annotations

import functools
import math
import zlib
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.linalg import blas
from scipy.special import gammaln

from .geometry import Window, circumradius
from .model.theory import GinibreParams
from .pattern import PointPattern

MAX_PROPOSALS_PER_POINT = 1_000_000
REORTHONORMALIZE_EVERY = 32
_POOL_ELEMENTS = 2_000_000
_MAX_CHUNK = 4096


class SamplerError(RuntimeError):
    """Numerical breakdown inside a sampler."""


class InvalidParameterError(ValueError):
    pass


def _label_code(label) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    return int(label)


@dataclass(frozen=True)
class Seed:
    """Master seed plus a path of labels (replicate index, component, ...).

    Every ``(master, labels, stage)`` triple maps to its own independent
    PCG64 stream, so replicates and algorithm stages never share draws.
    """

    master: int
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.master < 2**64:
            raise ValueError("master seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "labels", tuple(_label_code(v) for v in self.labels))

    def child(self, *labels) -> Seed:
        return Seed(self.master, self.labels + tuple(_label_code(v) for v in labels))

    def rng(self, stage: str) -> np.random.Generator:
        key = self.labels + (_label_code(stage),)
        return np.random.default_rng(np.random.SeedSequence(self.master, spawn_key=key))


SeedLike = Union[int, Seed]


def as_seed(s: SeedLike) -> Seed:
    return s if isinstance(s, Seed) else Seed(int(s))


def sample_ppp(lam: float, w: Window, seed: SeedLike) -> PointPattern:
    """Homogeneous Poisson pattern of intensity ``lam`` (per m^2) in ``w``."""
    if lam < 0:
        raise InvalidParameterError("intensity must be non-negative")
    seed = as_seed(seed)
    x0, y0, x1, y1 = w.bbox
    n = seed.rng("count").poisson(lam * (x1 - x0) * (y1 - y0))
    u = seed.rng("place").random((n, 2))
    pts = np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]])
    if len(pts):
        pts = pts[w.contains(pts)]
    return PointPattern(pts, w)


def truncation_rank(c: float, radius: float) -> int:
    """``ceil(c R^2) + ceil(4 sqrt(c R^2)) + 10``."""
    m = c * radius * radius
    return math.ceil(m) + math.ceil(4.0 * math.sqrt(m)) + 10


def _features(s: np.ndarray, theta: np.ndarray, c: float, n: int) -> np.ndarray:
    """Unit-normalised eigenfunction vectors at points with |z|^2 = s, arg z = theta."""
    k = np.arange(n)
    with np.errstate(divide="ignore"):
        log_cs = np.log(c * s)[:, None]
    logmag = 0.5 * k * log_cs - _half_log_factorial(n)
    logmag[:, 0] = 0.0  # k = 0 term, also at s = 0
    logmag -= logmag.max(axis=1, keepdims=True)
    mag = np.exp(logmag)
    mag /= np.sqrt((mag * mag).sum(axis=1, keepdims=True))
    phase = np.empty(mag.shape, dtype=complex)
    phase[:, 0] = 1.0
    if n > 1:
        phase[:, 1:] = np.exp(1j * theta)[:, None]
        np.cumprod(phase, axis=1, out=phase)
    return mag * phase


@functools.lru_cache(maxsize=64)
def _half_log_factorial(n: int) -> np.ndarray:
    return 0.5 * gammaln(np.arange(n) + 1.0)


class _ProposalPool:
    """Proposals from the mixture (1/n) sum_k |phi_k|^2, drawn and featurised in bulk.

    ``take`` always returns exactly ``count`` unexamined proposals; a remainder
    too short for the request is discarded, which is harmless because every
    proposal is an independent draw.
    """

    def __init__(self, rng: np.random.Generator, c: float, n: int):
        self.rng, self.c, self.n = rng, c, n
        harmonic = math.log(n) + 1.0
        self.size = int(min(max(64, 1.5 * n * harmonic), max(64, _POOL_ELEMENTS // n)))
        self.pos = self.end = 0

    def _refill(self, count: int):
        size = max(self.size, count)
        k = self.rng.integers(0, self.n, size)
        self.s = self.rng.gamma(k + 1.0, 1.0 / self.c)
        self.theta = self.rng.uniform(0.0, 2.0 * math.pi, size)
        self.u = self.rng.random(size)
        self.feats = _features(self.s, self.theta, self.c, self.n)
        self.pos = 0
        self.end = size

    def take(self, count: int) -> slice:
        if self.pos + count > self.end:
            self._refill(count)
        sl = slice(self.pos, self.pos + count)
        self.pos = sl.stop
        return sl

    def point(self, idx: int) -> tuple[float, float]:
        rad = math.sqrt(self.s[idx])
        return rad * math.cos(self.theta[idx]), rad * math.sin(self.theta[idx])


def _drop_direction(w: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Remove ``conj(w) @ coef`` from the conjugated orthonormal basis ``w``.

    Applies the Householder reflector mapping ``coef`` onto the first axis and
    discards the first column, updating ``w`` in place (Fortran order).
    """
    a = coef / np.linalg.norm(coef)
    alpha = -a[0] / abs(a[0]) if a[0] != 0 else -1.0
    h = a.copy()
    h[0] -= alpha
    h /= np.linalg.norm(h)
    x = w @ np.conj(h)
    return blas.zgeru(-2.0, x, h[1:], a=w[:, 1:], overwrite_a=1)


def _chunk(n: int, m: int) -> int:
    # ~1.5 expected acceptances per chunk; acceptance rate is m / n
    return min(_MAX_CHUNK, math.ceil(1.5 * n / m))


def _too_many(i: int, n: int) -> SamplerError:
    return SamplerError(f"rejection sampling exceeded {MAX_PROPOSALS_PER_POINT} proposals "
                        f"at point {i + 1} of {n}")


def _hkpv(c: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sequential sampler of the rank-``n`` projection DPP.

    The first two thirds of the points keep an orthonormal basis of the chosen
    feature vectors (Gram-Schmidt); the rest keep a basis of its orthogonal
    complement, which is then the smaller of the two. Both give the same
    residual density; only the bookkeeping cost differs.
    """
    out = np.empty((n, 2))
    pool = _ProposalPool(rng, c, n)
    switch = (2 * n) // 3
    # conj of the chosen orthonormal directions; column i filled at step i
    chosen = np.zeros((n, max(switch, 1)), dtype=complex, order="F")
    comp = None
    for i in range(n):
        m = n - i
        count = _chunk(n, m)
        tries = 0
        while True:
            sl = pool.take(count)
            feats = pool.feats[sl]
            if comp is None:
                coef = feats @ chosen[:, :i]
                prob = 1.0 - (coef.real ** 2 + coef.imag ** 2).sum(axis=1)
            else:
                coef = feats @ comp
                prob = (coef.real ** 2 + coef.imag ** 2).sum(axis=1)
            accept = np.flatnonzero(pool.u[sl] < prob)
            tries += accept[0] + 1 if accept.size else count
            if tries > MAX_PROPOSALS_PER_POINT:
                raise _too_many(i, n)
            if accept.size:
                j = accept[0]
                break
        pool.pos = sl.start + j + 1
        out[i] = pool.point(sl.start + j)
        if m == 1:
            break
        if comp is None:
            basis = chosen[:, :i]
            v = np.conj(feats[j]) - basis @ np.conj(coef[j])
            norm = np.linalg.norm(v)
            if norm < 0.5 or (i + 1) % REORTHONORMALIZE_EVERY == 0:
                # second pass; restores orthogonality lost to cancellation
                v -= basis @ np.conj(np.conj(v) @ basis)
                norm = np.linalg.norm(v)
            chosen[:, i] = v / norm
            if i + 1 == switch:
                q, _ = np.linalg.qr(np.conj(chosen), mode="complete")
                comp = np.asfortranarray(np.conj(q[:, switch:]))
                chosen = None
        else:
            comp = _drop_direction(comp, coef[j])
    return out


def sample_projection_ginibre(c: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """All ``n`` points of the rank-``n`` truncated Ginibre projection DPP.

    Returns an ``(n, 2)`` array in the order the points were drawn.

    Raises:
        SamplerError: if one point needs more than ``MAX_PROPOSALS_PER_POINT``
            proposals, which signals a degraded orthonormal basis.
    """
    if n <= 0:
        return np.empty((0, 2))
    return _hkpv(c, n, rng)


def sample_truncated_gpp(c: float, radius: float, seed: SeedLike, *,
                         rank: int | None = None) -> np.ndarray:
    """Truncated Ginibre sample restricted to the origin disc of ``radius``.

    ``rank`` overrides the truncation rank (test hook); by default it is
    :func:`truncation_rank`. Returns an ``(m, 2)`` array with ``m <= rank``.
    """
    if not (c > 0 and radius > 0):
        raise InvalidParameterError("c and radius must be positive")
    n = truncation_rank(c, radius) if rank is None else int(rank)
    pts = sample_projection_ginibre(c, n, as_seed(seed).rng("gpp"))
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius]


def simulation_radius(params: GinibreParams, w: Window) -> float:
    """Radius of the Ginibre disc simulated before thinning to cover ``w``."""
    return circumradius(w) / math.sqrt(params.beta) + 3.0 / math.sqrt(params.c)


def sample_beta_gpp(params: GinibreParams, w: Window, seed: SeedLike) -> PointPattern:
    """beta-Ginibre pattern in ``w`` by thinning and rescaling a Ginibre sample.

    A Ginibre sample with the same ``c`` on a disc covering ``w / sqrt(beta)``
    (plus a margin) is thinned with retention ``beta``, scaled by ``sqrt(beta)``,
    moved to the window centroid and clipped.
    """
    if params.beta > 1:
        raise InvalidParameterError(
            f"beta = {params.beta} cannot be simulated; thinning needs beta in (0, 1]")
    seed = as_seed(seed)
    pts = sample_truncated_gpp(params.c, simulation_radius(params, w), seed)
    keep = seed.rng("thin").random(len(pts)) < params.beta
    cx, cy = w.centroid()
    pts = pts[keep] * math.sqrt(params.beta) + np.array([cx, cy])
    if len(pts):
        pts = pts[w.contains(pts)]
    return PointPattern(pts, w)


def superpose(patterns: Sequence[PointPattern]) -> PointPattern:
    """Union of patterns observed in one common window."""
    if not patterns:
        raise ValueError("nothing to superpose")
    w = patterns[0].window
    for p in patterns[1:]:
        if p.window != w:
            raise ValueError("superposed patterns must share an identical window")
    return PointPattern(np.concatenate([p.points for p in patterns]), w)
