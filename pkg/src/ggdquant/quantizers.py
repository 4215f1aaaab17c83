"""Uniform and extended-zero-zone scalar quantizers.

The scale ``B(j, lambda)`` has a zero zone ``[-lambda 2^(j-1), lambda 2^(j-1))``
and non-zero cells of width ``lambda`` beyond it::

    cell k >= 1:  [lambda (2^(j-1) + k - 1), lambda (2^(j-1) + k))

mirrored for negative k.  ``j = 0`` is the plain uniform quantizer.  The kinds
differ only in how non-zero cells are reconstructed:

    USQ, EZZ    midpoints
    SOEZZ       centroid for cells +-1 (one shared magnitude a1), midpoints elsewhere
    OUSQ, OEZZ  centroid for every cell

USQ and OUSQ are the ``j = 0`` members of EZZ and OEZZ.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import ggd
from . import ratedist as rd
from .errors import DomainError

__all__ = [
    "J_MAX",
    "MODEL_TAIL",
    "Kind",
    "EzzScale",
    "QuantizerSpec",
    "QuantizedFrame",
    "OperatingPoint",
    "MidpointFallbackWarning",
    "cell_bounds",
    "quantize",
    "reconstruct",
    "empirical_centroids",
    "model_centroids",
    "make_spec",
    "model_rate_distortion",
    "empirical_rate_distortion",
    "plugin_entropy",
    "gain",
    "loss",
    "default_lambda_grid",
    "EmpiricalSource",
    "sweep_operating_points",
    "pareto_front",
    "frontier_rate_at",
    "frontier_distortion_at",
]

J_MAX = 8
MODEL_TAIL = 1e-10
_LN2 = math.log(2.0)


class MidpointFallbackWarning(RuntimeWarning):
    """A centroid was requested for a cell with no table entry."""


class Kind(enum.Enum):
    USQ = "usq"
    OUSQ = "ousq"
    EZZ = "ezz"
    SOEZZ = "soezz"
    OEZZ = "oezz"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown quantizer kind {value!r}") from None

    @property
    def uniform_only(self) -> bool:
        return self in (Kind.USQ, Kind.OUSQ)

    @property
    def n_centroids(self):
        """Number of transmitted magnitudes: 0, 1, or None for 'all cells'."""
        if self in (Kind.USQ, Kind.EZZ):
            return 0
        if self is Kind.SOEZZ:
            return 1
        return None


@dataclass(frozen=True)
class EzzScale:
    """Zero-zone exponent ``j`` and step ``lam``; zero-zone width is lam * 2**j."""

    j: int
    lam: float

    def __post_init__(self):
        if isinstance(self.j, bool) or int(self.j) != self.j or not 0 <= self.j <= J_MAX:
            raise DomainError(f"j must be an integer in [0, {J_MAX}], got {self.j!r}")
        object.__setattr__(self, "j", int(self.j))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be positive and finite, got {self.lam!r}")
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def half_zone(self) -> float:
        return self.lam * 2.0 ** (self.j - 1)

    @property
    def zero_width(self) -> float:
        return self.lam * 2.0**self.j

    def lower(self, k):
        """Lower edge of non-zero cell k >= 1 (vectorized)."""
        return self.half_zone + (np.asarray(k) - 1) * self.lam

    def midpoint(self, k):
        return self.half_zone + (np.asarray(k) - 0.5) * self.lam


@dataclass(frozen=True)
class QuantizerSpec:
    """Quantizer kind, scale and the table of non-zero-cell magnitudes a1, a2, ...

    The table is empty for midpoint kinds, has at most one entry for SOEZZ and
    any length for the centroid kinds; cells beyond it use midpoints.
    """

    kind: Kind
    scale: EzzScale
    recon: tuple = ()

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind.uniform_only and self.scale.j != 0:
            raise DomainError(f"{kind.name} is defined for j=0 only")
        recon = tuple(float(a) for a in self.recon)
        limit = kind.n_centroids
        if limit is not None and len(recon) > limit:
            raise DomainError(f"{kind.name} carries at most {limit} magnitudes")
        if recon:
            a = np.asarray(recon)
            ks = np.arange(1, a.size + 1)
            bad = np.flatnonzero(~((self.scale.lower(ks) <= a) & (a <= self.scale.lower(ks + 1))))
            if bad.size:
                k = int(bad[0]) + 1
                lo, hi = cell_bounds(self.scale, k)
                raise DomainError(f"magnitude a{k}={a[k - 1]} outside its cell [{lo}, {hi})")
        object.__setattr__(self, "recon", recon)


@dataclass(frozen=True)
class QuantizedFrame:
    indices: np.ndarray

    @property
    def n(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class OperatingPoint:
    rate: float
    distortion: float
    j: int
    lam: float


def cell_bounds(scale: EzzScale, k: int) -> tuple[float, float]:
    """Bounds of cell k; the zero zone is (-h, h) and other cells are [lo, hi)."""
    k = int(k)
    if k == 0:
        return -scale.half_zone, scale.half_zone
    lo = float(scale.lower(abs(k)))
    hi = float(scale.lower(abs(k) + 1))
    return (lo, hi) if k > 0 else (-hi, -lo)


def quantize(scale: EzzScale, x):
    """Signed cell indices; magnitudes on a threshold join the outer cell."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot quantize non-finite values")
    mag = np.abs(x)
    k = np.floor((mag - scale.half_zone) / scale.lam).astype(np.int64) + 1
    # settle rounding so the index agrees with the edges cell_bounds reports
    k = np.where((k >= 1) & (mag < scale.lower(k)), k - 1, k)
    k = np.where(mag >= scale.lower(k + 1), k + 1, k)
    k = np.where(mag < scale.half_zone, 0, np.maximum(k, 1))
    out = np.where(x < 0, -k, k)
    return int(out) if out.ndim == 0 else out


def _magnitudes(spec: QuantizerSpec, kabs):
    table = np.asarray(spec.recon, dtype=float)
    covered = (kabs >= 1) & (kabs <= table.size)
    mag = spec.scale.midpoint(kabs)
    if table.size:
        mag = np.where(covered, table[np.clip(kabs - 1, 0, table.size - 1)], mag)
    mag = np.where(kabs == 0, 0.0, mag)
    if spec.kind.n_centroids is None:
        wanted = kabs >= 1
    elif spec.kind.n_centroids == 1:
        wanted = kabs == 1
    else:
        wanted = np.zeros_like(kabs, dtype=bool)
    return mag, wanted & ~covered


def reconstruct(spec: QuantizerSpec, k, return_fallback: bool = False):
    """Reconstruction values for signed indices ``k``.

    A centroid kind asked for a cell its table does not cover falls back to
    the midpoint and emits ``MidpointFallbackWarning``; pass
    ``return_fallback=True`` to also get the per-index fallback mask.
    """
    k = np.asarray(k, dtype=np.int64)
    kabs = np.abs(k)
    mag, fallback = _magnitudes(spec, kabs)
    if np.any(fallback):
        warnings.warn(
            f"{spec.kind.name}: {int(np.count_nonzero(fallback))} values used midpoints",
            MidpointFallbackWarning,
            stacklevel=2,
        )
    out = np.where(k < 0, -mag, mag)
    if out.ndim == 0:
        out = float(out)
    return (out, fallback) if return_fallback else out


def empirical_centroids(scale: EzzScale, samples, max_k: int = None):
    """Mean magnitude of the samples in each non-zero cell 1..max_k.

    Returns ``(table, fallback)`` where ``fallback[k-1]`` marks an empty cell
    whose entry is the midpoint.  ``max_k`` defaults to the largest occupied
    cell.
    """
    x = np.asarray(samples, dtype=float).ravel()
    kabs = np.abs(quantize(scale, x)).astype(np.int64)
    if max_k is None:
        max_k = int(kabs.max()) if kabs.size else 0
    if max_k <= 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    keep = (kabs >= 1) & (kabs <= max_k)
    counts = np.bincount(kabs[keep], minlength=max_k + 1)[1:]
    sums = np.bincount(kabs[keep], weights=np.abs(x[keep]), minlength=max_k + 1)[1:]
    mids = scale.midpoint(np.arange(1, max_k + 1))
    empty = counts == 0
    table = np.where(empty, mids, sums / np.maximum(counts, 1))
    # a mean of floats can round a hair outside its cell
    lo = scale.lower(np.arange(1, max_k + 1))
    hi = scale.lower(np.arange(2, max_k + 2))
    table = np.clip(table, lo, hi)
    return table, empty


def _model_cells(scale: EzzScale, p: ggd.GgdParams, tail: float):
    """Non-zero cell count K so that P(|X| beyond cell K) < tail."""
    xmax = ggd.tail_point(p, tail)
    return max(int(math.ceil((xmax - scale.half_zone) / scale.lam)), 1)


def _model_moments(scale: EzzScale, p: ggd.GgdParams, tail: float):
    """Moments of f over [0, h), over cells 1..K and over the residue beyond K."""
    K = _model_cells(scale, p, tail)
    thr = np.concatenate([[0.0], scale.lower(np.arange(1, K + 2)), [np.inf]])
    return ggd.partition_moments(p, thr), K


def _centroids_from(scale: EzzScale, M, K):
    mids = scale.midpoint(np.arange(1, K + 1))
    m0, m1 = M[0, 1 : K + 1], M[1, 1 : K + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        cen = np.where(m0 > 0, m1 / m0, mids)
    lo = scale.lower(np.arange(1, K + 1))
    return np.clip(cen, lo, lo + scale.lam)


def model_centroids(scale: EzzScale, p: ggd.GgdParams, tail: float = MODEL_TAIL):
    """Conditional mean magnitudes of cells 1..K under the GGD model."""
    M, K = _model_moments(scale, p, tail)
    return _centroids_from(scale, M, K)


def make_spec(kind, scale: EzzScale, table=()) -> QuantizerSpec:
    """Spec for ``kind`` keeping only as much of ``table`` as the kind transmits."""
    kind = Kind.parse(kind)
    n = kind.n_centroids
    table = tuple(np.asarray(table, dtype=float).tolist())
    return QuantizerSpec(kind, scale, table if n is None else table[:n])


def _rd_from_moments(spec: QuantizerSpec, M, K):
    kabs = np.arange(0, K + 1)
    mag, _ = _magnitudes(spec, kabs)
    body = M[:, : K + 1]
    # both mirrored halves of every cell, the zero zone included
    dist = 2 * float(np.sum(body[2] - 2 * mag * body[1] + mag * mag * body[0]))
    # beyond cell K every value would sit in its own cell of width lambda
    tail_mass = M[0, K + 1]
    dist += 2 * tail_mass * spec.scale.lam**2 / 12
    p0 = 2 * M[0, 0]
    pk = M[0, 1:]
    pk = pk[pk > 0]
    rate = -2 * float(pk @ np.log2(pk))
    if p0 > 0:
        rate -= p0 * math.log2(p0)
    return max(rate, 0.0), max(dist, 0.0)


def model_rate_distortion(spec: QuantizerSpec, p: ggd.GgdParams, tail: float = MODEL_TAIL):
    """Entropy of the cell probabilities and the MSE under the GGD model.

    Cells are enumerated until the mass beyond them is below ``tail``.  That
    residue counts as one symbol for the rate and contributes the
    fine-cell error lambda^2 / 12 per unit mass to the distortion.
    """
    M, K = _model_moments(spec.scale, p, tail)
    return _rd_from_moments(spec, M, K)


def plugin_entropy(indices) -> float:
    """Entropy in bits of the empirical index distribution."""
    k = np.asarray(indices, dtype=np.int64).ravel()
    if k.size == 0:
        raise DomainError("no indices")
    lo, hi = int(k.min()), int(k.max())
    if hi - lo <= 4 * k.size:
        counts = np.bincount(k - lo)
        counts = counts[counts > 0]
    else:
        _, counts = np.unique(k, return_counts=True)
    f = counts / k.size
    return max(-float(f @ np.log2(f)), 0.0)


def empirical_rate_distortion(spec: QuantizerSpec, samples):
    """Plug-in entropy of the indices and mean squared reconstruction error."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise DomainError("need at least one sample")
    k = quantize(spec.scale, x)
    y = reconstruct(spec, k)
    return plugin_entropy(k), float(np.mean((x - y) ** 2))


def gain(sigma2: float, d: float) -> float:
    """10 log10(sigma2 / d) in dB."""
    if not d > 0:
        raise DomainError("distortion must be positive")
    return 10 * math.log10(sigma2 / d)


def loss(curve: rd.RdCurve, r: float, g: float) -> float:
    """Shortfall in dB of gain ``g`` at rate ``r`` against the curve's G_max(r)."""
    return rd.g_max(curve, r) - g


def default_lambda_grid(p: ggd.GgdParams, j: int, n: int = 96) -> np.ndarray:
    """Log-spaced steps covering roughly 0 to 6 bits/sample at scale j.

    The finest step gives about 6.5 bits at high resolution; the coarsest puts
    all but 1e-4 of the mass inside the zero zone.
    """
    lam_min = 2.0 ** (ggd.differential_entropy(p) - 6.5)
    x_q = ggd.tail_point(p, 1e-4)
    lam_max = max(2 * x_q / 2.0**j, 2 * lam_min)
    return np.geomspace(lam_min, lam_max, n)


def pareto_front(points) -> list:
    """Operating points not dominated in (rate, distortion), sorted by rate."""
    pts = sorted(points, key=lambda t: (t.rate, t.distortion, t.j, t.lam))
    out = []
    best = math.inf
    for t in pts:
        if t.distortion < best:
            if out and out[-1].rate == t.rate:
                out.pop()
            out.append(t)
            best = t.distortion
    return out


class EmpiricalSource:
    """Samples prepared for fast evaluation of many scales.

    Magnitudes of each sign are sorted once with running sums of |x| and
    x^2, so the counts, centroids, entropy and squared error of any scale
    follow from a few binary searches.  Results agree with
    ``empirical_rate_distortion`` on data-derived centroids up to rounding.
    """

    def __init__(self, samples):
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 1:
            raise DomainError("need at least one sample")
        if not np.all(np.isfinite(x)):
            raise DomainError("samples must be finite")
        self.n = int(x.size)
        self.n_zero = int(np.count_nonzero(x == 0))
        self.sides = []
        for mag in (np.sort(x[x > 0]), np.sort(-x[x < 0])):
            c1 = np.concatenate([[0.0], np.cumsum(mag)])
            c2 = np.concatenate([[0.0], np.cumsum(mag * mag)])
            self.sides.append((mag, c1, c2))
        self.max_abs = float(np.max(np.abs(x)))

    def cell_sums(self, scale: EzzScale):
        """Per-side counts and sums of |x|, x^2 in the zero zone and cells 1..K."""
        kmax = max(int(quantize(scale, self.max_abs)), 0)
        thr = scale.lower(np.arange(1, kmax + 2))
        out = []
        for mag, c1, c2 in self.sides:
            idx = np.searchsorted(mag, thr, side="left")
            cnt = np.diff(idx)
            s1 = c1[idx[1:]] - c1[idx[:-1]]
            s2 = c2[idx[1:]] - c2[idx[:-1]]
            out.append((int(idx[0]), float(c2[idx[0]]), cnt, s1, s2))
        return out

    def rate_distortion(self, kind, scale: EzzScale):
        """Rate and distortion with centroids measured on these same samples."""
        kind = Kind.parse(kind)
        (z0p, z2p, cp, s1p, s2p), (z0n, z2n, cn, s1n, s2n) = self.cell_sums(scale)
        cnt = cp + cn
        s1 = s1p + s1n
        s2 = s2p + s2n
        K = cnt.size
        ks = np.arange(1, K + 1)
        mag = scale.midpoint(ks)
        if kind.n_centroids != 0 and K:
            lim = K if kind.n_centroids is None else min(kind.n_centroids, K)
            with np.errstate(invalid="ignore", divide="ignore"):
                cen = np.where(cnt[:lim] > 0, s1[:lim] / np.maximum(cnt[:lim], 1), mag[:lim])
            lo = scale.lower(ks[:lim])
            mag[:lim] = np.clip(cen, lo, lo + scale.lam)
        sq = z2p + z2n + float(np.sum(s2 - 2 * mag * s1 + mag * mag * cnt))
        counts = np.concatenate([[self.n_zero + z0p + z0n], cp, cn])
        f = counts[counts > 0] / self.n
        rate = max(-float(f @ np.log2(f)), 0.0)
        return rate, max(sq / self.n, 0.0)


def _evaluate(kind: Kind, scale: EzzScale, p, data):
    if data is None:
        M, K = _model_moments(scale, p, MODEL_TAIL)
        table = _centroids_from(scale, M, K) if kind.n_centroids != 0 else ()
        return _rd_from_moments(make_spec(kind, scale, table), M, K)
    return data.rate_distortion(kind, scale)


def sweep_operating_points(
    p: ggd.GgdParams,
    kind,
    j_range=None,
    lambda_grid=None,
    samples=None,
) -> list:
    """Pareto frontier over every (j, lambda) pair.

    ``lambda_grid`` may be a sequence shared by all j, a callable ``j -> grid``
    or None for ``default_lambda_grid``.  With ``samples`` (an array or an
    ``EmpiricalSource``) the points are measured on the data, centroids taken
    from the same data; otherwise the GGD model is used.
    """
    kind = Kind.parse(kind)
    data = None
    if samples is not None:
        data = samples if isinstance(samples, EmpiricalSource) else EmpiricalSource(samples)
    if j_range is None:
        j_range = [0] if kind.uniform_only else range(J_MAX + 1)
    j_range = list(j_range)
    if not j_range:
        raise DomainError("j_range is empty")
    pts = []
    for j in j_range:
        if callable(lambda_grid):
            grid = lambda_grid(j)
        elif lambda_grid is None:
            grid = default_lambda_grid(p, j)
        else:
            grid = lambda_grid
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        if grid.size == 0:
            raise DomainError("lambda grid is empty")
        for lam in grid:
            scale = EzzScale(j, float(lam))
            r, d = _evaluate(kind, scale, p, data)
            pts.append(OperatingPoint(float(r), float(d), int(j), float(lam)))
    return pareto_front(pts)


def _front_arrays(front):
    r = np.array([t.rate for t in front])
    d = np.array([t.distortion for t in front])
    return r, d


def frontier_rate_at(front, d):
    """Rate on a Pareto frontier at distortion d (log-distortion interpolation)."""
    r, dd = _front_arrays(front)
    d = np.asarray(d, dtype=float)
    if np.any((d < dd.min()) | (d > dd.max())):
        raise DomainError("distortion outside the frontier")
    out = np.interp(np.log(d), np.log(dd[::-1]), r[::-1])
    return float(out) if out.ndim == 0 else out


def frontier_distortion_at(front, rate):
    """Distortion on a Pareto frontier at the given rate (log-distortion interpolation)."""
    r, dd = _front_arrays(front)
    rate = np.asarray(rate, dtype=float)
    if np.any((rate < r.min()) | (rate > r.max())):
        raise DomainError("rate outside the frontier")
    out = np.exp(np.interp(rate, r, np.log(dd)))
    return float(out) if out.ndim == 0 else out
