"""Numerical rate-distortion functions under squared error.

A continuous source is replaced by a finely discretized alphabet and the
rate-distortion function of that alphabet is traced with Blahut's
alternating minimization.  The reproduction alphabet equals the source
alphabet.  On a uniform grid the channel matrix ``exp(s (x - y)^2)`` is
Toeplitz, so every matrix-vector product is a 1-D convolution with a kernel
truncated where it underflows; this is exact in double precision and keeps
the cost linear in the alphabet size times the kernel width.

Iterations are accelerated with SQUAREM (squared extrapolation) guarded by the
Blahut objective, so every accepted step is monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from . import ggd
from .errors import DegenerateSourceError, DomainError, RangeError

__all__ = [
    "DiscreteSource",
    "BlahutPoint",
    "RdCurve",
    "default_span",
    "discretize_ggd",
    "discretize_empirical",
    "blahut_point",
    "rd_curve",
    "shannon_lower_bound",
    "koshelev_bound",
    "KOSHELEV_SHIFT",
    "invert_rate",
    "rate_at",
    "g_max",
]

_LN2 = math.log(2.0)
# exp(x) underflows to zero below this
_UNDERFLOW = 745.0
# reproduction letters lighter than this are removed from the support
_PRUNE = 1e-12
# source letters lighter than this are dropped before iterating; a lighter
# threshold than _PRUNE leaves letters the initial support cannot reach
_TRIM = _PRUNE
# channel outputs below this count as underflowed
_KQ_MIN = 1e-290
# kernels longer than this use the FFT
_DIRECT_MAX = 401
# FFT outputs below this fraction of the input mass are recomputed directly
_FFT_FLOOR = 1e-8

KOSHELEV_SHIFT = 0.5 * math.log2(math.pi * math.e / 6)

DEFAULT_M_POINTS = 2001
DEFAULT_N_SLOPES = 64
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10000
# discretization with step h stays accurate down to about D = h^2
DMIN_PER_H2 = 1.0
DEDUPE_BITS = 1e-4
_SHALLOW = 0.55
# the sweep continues past _SHALLOW until the rate falls below _LOW_RATE
_LOW_RATE = 0.01
_MAX_EXTRA = 24


@dataclass(frozen=True)
class DiscreteSource:
    """Finite alphabet ``points`` with probabilities ``probs``.

    ``sigma2`` is the variance of the underlying continuous source, used as
    the zero-rate distortion of any curve computed from this alphabet.  It
    defaults to the alphabet's own variance.
    """

    points: np.ndarray
    probs: np.ndarray
    sigma2: float = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        pr = np.asarray(self.probs, dtype=float)
        if pts.ndim != 1 or pts.shape != pr.shape or pts.size < 2:
            raise DomainError("points and probs must be equal-length vectors")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("points must be strictly increasing")
        if np.any(pr < 0) or abs(pr.sum() - 1) > 1e-9:
            raise DomainError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)
        if self.sigma2 is None:
            object.__setattr__(self, "sigma2", self.variance)

    @property
    def mean(self) -> float:
        return float(self.probs @ self.points)

    @property
    def variance(self) -> float:
        return float(self.probs @ (self.points - self.mean) ** 2)

    @property
    def step(self):
        """Grid step when the points are uniformly spaced, else None."""
        d = np.diff(self.points)
        h = (self.points[-1] - self.points[0]) / (self.points.size - 1)
        return float(h) if np.allclose(d, h, rtol=1e-9, atol=0) else None


def default_span(alpha: float) -> float:
    return 20.0 if alpha >= 0.25 else 40.0


def discretize_ggd(p: ggd.GgdParams, span: float = None, m_points: int = DEFAULT_M_POINTS) -> DiscreteSource:
    """Uniform grid on [-span*sigma, span*sigma] weighted by GGD cell masses.

    Each grid point owns the cell of width h centred on it; mass outside the
    span is dropped and the rest renormalized.
    """
    if span is None:
        span = default_span(p.alpha)
    if not span > 0:
        raise DomainError("span must be positive")
    if m_points < 16:
        raise DomainError("m_points must be at least 16")
    half = span * p.sigma
    pts = np.linspace(-half, half, m_points)
    h = pts[1] - pts[0]
    m0, _, _ = ggd.cell_moments(p, pts - h / 2, pts + h / 2)
    # exact symmetry regardless of rounding in the incomplete gamma calls
    m0 = 0.5 * (m0 + m0[::-1])
    return DiscreteSource(pts, m0 / m0.sum(), p.sigma2)


def discretize_empirical(samples, m_points: int = DEFAULT_M_POINTS) -> DiscreteSource:
    """Histogram of the samples on ``m_points`` uniform bins over [min, max]."""
    x = np.asarray(samples, dtype=float).ravel()
    if m_points < 16:
        raise DomainError("m_points must be at least 16")
    if x.size < m_points:
        raise DomainError(f"need at least m_points={m_points} samples, got {x.size}")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise DegenerateSourceError("constant input has no spread to model")
    counts, edges = np.histogram(x, bins=m_points, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return DiscreteSource(centers, counts / x.size, float(np.var(x)))


class _Channel:
    """Products with A = exp(s (x_i - x_j)^2) and with A * (x_i - x_j)^2.

    Wide kernels go through the FFT.  Its error is absolute, about 1e-16
    times the mass of the input, so entries that come out below
    ``_FFT_FLOOR`` times that mass are recomputed directly.  ``exact=True``
    forces direct evaluation throughout.
    """

    def __init__(self, points: np.ndarray, slope: float, step):
        self.m = points.size
        self.dense = None
        self.nfft = None
        if step is None:
            d = (points[:, None] - points[None, :]) ** 2
            self.dense = np.exp(slope * d)
            self.ddense = self.dense * d
            return
        width = math.sqrt(_UNDERFLOW / abs(slope)) / step
        self.L = int(min(self.m - 1, math.ceil(width)))
        lag2 = (step * np.arange(-self.L, self.L + 1)) ** 2
        self.kernel = np.exp(slope * lag2)
        self.dkernel = self.kernel * lag2
        if self.kernel.size > _DIRECT_MAX:
            self.nfft = sp_fft.next_fast_len(self.m + 2 * self.L, real=True)
            self.kf = sp_fft.rfft(self.kernel, self.nfft)

    def _direct(self, v, k):
        return np.convolve(v, k)[self.L : self.L + self.m]

    def apply(self, v, exact: bool = False):
        if self.dense is not None:
            return self.dense @ v
        if exact or self.nfft is None:
            return self._direct(v, self.kernel)
        out = sp_fft.irfft(sp_fft.rfft(v, self.nfft) * self.kf, self.nfft)[self.L : self.L + self.m]
        bad = np.flatnonzero(out < _FFT_FLOOR * np.abs(v).sum())
        if bad.size:
            padded = np.pad(v, self.L)
            # recompute each run of flagged outputs with one direct convolution
            cuts = np.flatnonzero(np.diff(bad) > 1) + 1
            for run in np.split(bad, cuts):
                i0, i1 = run[0], run[-1] + 1
                out[i0:i1] = np.convolve(padded[i0 : i1 + 2 * self.L], self.kernel, "valid")
        return out

    def apply_d(self, v):
        if self.dense is not None:
            return self.ddense @ v
        return self._direct(v, self.dkernel)


@dataclass(frozen=True)
class BlahutPoint:
    """One point of a rate-distortion curve.

    ``rate`` is the mutual information of the final test channel and
    ``distortion`` its expected squared error, so (rate, distortion) is
    achievable for the discretized source.  ``gap`` bounds in bits how far
    ``rate`` can lie above the curve at that slope.
    """

    rate: float
    distortion: float
    slope: float
    gap: float
    iterations: int
    converged: bool
    q: np.ndarray = field(repr=False, compare=False)


def _blahut_step(ch: _Channel, p, mask, q, exact: bool = False):
    kq = ch.apply(q, exact)
    # a source letter whose every reproduction underflowed carries < _PRUNE
    # mass and is left out rather than turned into inf/nan
    r = np.divide(p, kq, out=np.zeros_like(p), where=mask & (kq > _KQ_MIN))
    return ch.apply(r, exact), kq


def _objective(ch: _Channel, p, mask, q):
    kq = ch.apply(q)
    ok = mask & (kq > _KQ_MIN)
    return -float(p[ok] @ np.log(kq[ok]))


def _gap(q, c):
    # taken over the live reproduction letters only
    live = q > 0
    lc = np.log(np.maximum(c[live], 1e-300))
    return float((lc.max() - q[live] @ (c[live] * lc)) / _LN2)


def _prune(q):
    q = q / q.sum()
    q[q < _PRUNE] = 0.0
    return q / q.sum()


def blahut_point(
    src: DiscreteSource,
    slope: float,
    q0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BlahutPoint:
    """Rate-distortion point of ``src`` at Lagrange slope ``slope`` (nats per unit D).

    ``q0`` warm-starts the reproduction marginal.  Iteration stops once the
    upper/lower bound gap drops below ``tol`` bits or after ``max_iter``
    Blahut updates; the result is flagged ``converged=False`` in the latter
    case.
    """
    if not slope < 0:
        raise DomainError("slope must be negative")
    p = src.probs.copy()
    p[p < _TRIM] = 0.0
    p /= p.sum()
    # squared error never favours reproductions outside the source hull
    nz = np.flatnonzero(p)
    win = slice(nz[0], nz[-1] + 1)
    pw = p[win]
    mask = pw > 0
    ch = _Channel(src.points[win], slope, src.step)

    if q0 is None:
        q = pw.copy()
    else:
        q0 = np.asarray(q0, dtype=float)
        if q0.shape != p.shape or np.any(q0 < 0):
            raise DomainError("q0 must be a nonnegative vector matching the source")
        q = q0[win].copy()
        if not q.sum() > 0:
            q = pw.copy()
    q /= q.sum()
    q = _prune(q)

    it = 0
    gap = math.inf
    while it < max_iter:
        c, _ = _blahut_step(ch, pw, mask, q)
        it += 1
        gap = _gap(q, c)
        if gap < tol:
            # confirm with exact products before stopping
            gap = _gap(q, _blahut_step(ch, pw, mask, q, exact=True)[0])
            if gap < tol:
                break
        q1 = _prune(q * c)
        c1, _ = _blahut_step(ch, pw, mask, q1)
        it += 1
        # extrapolation can starve isolated letters of negligible objective
        # weight; the plain step restores them, so test q1 as well
        if _gap(q1, c1) < tol:
            gap = _gap(q1, _blahut_step(ch, pw, mask, q1, exact=True)[0])
            if gap < tol:
                q = q1
                break
        q2 = _prune(q1 * c1)
        # SQUAREM extrapolation, accepted only if it does not worsen the objective
        r = q1 - q
        v = q2 - q1 - r
        nv = math.sqrt(v @ v)
        best = q2
        if nv > 0:
            f2 = _objective(ch, pw, mask, q2)
            al = min(-math.sqrt(r @ r) / nv, -1.0)
            while al < -1.0:
                # the floor keeps live letters alive; pruned ones stay at zero
                qn = _prune(np.maximum(q - 2 * al * r + al * al * v, 1e-3 * q))
                if _objective(ch, pw, mask, qn) <= f2:
                    best = qn
                    break
                al = (al - 1) / 2
        q = best

    # the reported point uses exact products only
    c, kq = _blahut_step(ch, pw, mask, q, exact=True)
    gap = _gap(q, c)
    ok = mask & (kq > _KQ_MIN)
    dist = float(pw[ok] @ (ch.apply_d(q)[ok] / kq[ok]))
    live = q > 0
    lc = np.log(np.maximum(c[live], 1e-300))
    info = slope * dist - float(pw[ok] @ np.log(kq[ok])) - float(q[live] @ (c[live] * lc))
    rate = max(info / _LN2, 0.0)
    qfull = np.zeros_like(p)
    qfull[win] = q
    return BlahutPoint(rate, dist, slope, gap, it, gap < tol, qfull)


@dataclass(frozen=True)
class RdCurve:
    """Rate-distortion curve sorted by increasing rate (decreasing distortion).

    The first point is the zero-rate point (0, sigma2).  ``gap`` and
    ``converged`` describe each Blahut solve; the zero-rate point is exact.
    """

    rate: np.ndarray
    distortion: np.ndarray
    slope: np.ndarray
    gap: np.ndarray
    converged: np.ndarray
    sigma2: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def points(self):
        return list(zip(self.rate.tolist(), self.distortion.tolist(), self.slope.tolist()))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def __len__(self):
        return self.rate.size


def rd_curve(
    src: DiscreteSource,
    n_points: int = DEFAULT_N_SLOPES,
    d_min: float = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RdCurve:
    """Trace R(D) with a log-spaced sweep of ``n_points`` slopes.

    Slopes run from about -1/(2 d_min) up to -0.55/variance and then keep
    halving until the rate drops below 0.01 bits.  Every solve starts from
    the source distribution.  Points whose rates differ by less than 1e-4 bits
    are merged, the exact zero-rate point (0, sigma2) is added and only the
    lower convex hull is kept.
    """
    if n_points < 2:
        raise DomainError("n_points must be at least 2")
    var = src.variance
    h = src.step
    if d_min is None:
        d_min = 1e-4 * var
        if h is not None:
            d_min = max(d_min, DMIN_PER_H2 * h * h)
    slopes = list(-np.geomspace(1 / (2 * d_min), _SHALLOW / var, n_points))
    pts = [blahut_point(src, float(s), tol=tol, max_iter=max_iter) for s in slopes]
    # heavy tails reach zero rate only at much shallower slopes
    s = slopes[-1]
    for _ in range(_MAX_EXTRA):
        if pts[-1].rate < _LOW_RATE:
            break
        s *= 0.5
        pts.append(blahut_point(src, float(s), tol=tol, max_iter=max_iter))

    # ascending rate; keep the first of any run closer than DEDUPE_BITS
    pts.sort(key=lambda b: (b.rate, -b.distortion))
    rate = [0.0]
    dist = [float(src.sigma2)]
    slope = [0.0]
    gap = [0.0]
    conv = [True]
    for b in pts:
        if b.rate - rate[-1] < DEDUPE_BITS or b.distortion >= dist[-1]:
            continue
        rate.append(b.rate)
        dist.append(b.distortion)
        slope.append(b.slope)
        gap.append(b.gap)
        conv.append(b.converged)
    keep = _lower_hull(np.array(dist), np.array(rate))
    rate, dist, slope, gap, conv = ([v[i] for i in keep] for v in (rate, dist, slope, gap, conv))
    meta = {
        "m_points": int(src.points.size),
        "step": h,
        "d_min": float(d_min),
        "n_slopes": int(n_points),
        "tol_bits": tol,
        "max_iter": max_iter,
        "iterations": [b.iterations for b in pts],
        "lowest_swept_rate": min(b.rate for b in pts),
    }
    return RdCurve(
        np.array(rate),
        np.array(dist),
        np.array(slope),
        np.array(gap),
        np.array(conv, dtype=bool),
        float(src.sigma2),
        meta,
    )


def _lower_hull(d, r) -> list:
    """Indices (in input order) of the lower convex hull of points (d, r).

    Every Blahut point is the rate and distortion of an actual test channel,
    so a point above the chord of two others is dominated by time sharing and
    is dropped.  Input is ordered by decreasing d.
    """
    hull = []
    for i in range(d.size - 1, -1, -1):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (d[b] - d[a]) * (r[i] - r[a]) - (r[b] - r[a]) * (d[i] - d[a])
            if cross > 0:
                break
            hull.pop()
        hull.append(i)
    return sorted(hull)


def shannon_lower_bound(p: ggd.GgdParams, d) -> float:
    """H0 - 1/2 log2(2 pi e D) in bits; negative values are returned as-is."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distortion must be positive")
    out = ggd.differential_entropy(p) - 0.5 * np.log2(2 * math.pi * math.e * d)
    return float(out) if out.ndim == 0 else out


def koshelev_bound(p: ggd.GgdParams, d) -> float:
    """Shannon lower bound shifted up by 1/2 log2(pi e / 6) bits."""
    return shannon_lower_bound(p, d) + KOSHELEV_SHIFT


def invert_rate(curve: RdCurve, r) -> float:
    """Distortion D0 with R(D0) = r, interpolating log D linearly in rate."""
    r = np.asarray(r, dtype=float)
    lo, hi = curve.rate[0], curve.rate[-1]
    if np.any((r < lo) | (r > hi)):
        raise RangeError(f"rate outside the curve range [{lo}, {hi}]")
    out = np.exp(np.interp(r, curve.rate, np.log(curve.distortion)))
    return float(out) if out.ndim == 0 else out


def rate_at(curve: RdCurve, d) -> float:
    """R(d) by the same interpolation as ``invert_rate``."""
    d = np.asarray(d, dtype=float)
    lo, hi = curve.distortion[-1], curve.distortion[0]
    if np.any((d < lo * (1 - 1e-12)) | (d > hi * (1 + 1e-12))):
        raise RangeError(f"distortion outside the curve range [{lo}, {hi}]")
    out = np.interp(np.log(d), np.log(curve.distortion[::-1]), curve.rate[::-1])
    return float(out) if out.ndim == 0 else out


def g_max(curve: RdCurve, r) -> float:
    """Largest gain in dB attainable at rate r: 10 log10(sigma2 / D0)."""
    out = 10 * np.log10(curve.sigma2 / invert_rate(curve, r))
    return float(out) if np.ndim(out) == 0 else out
