"""Block-adaptive quantization with compact side information.

Per block the encoder fits a GGD by moments, normalizes the target
distortion by the estimated variance, looks up ``(j, lambda)`` in a table of
unit-variance operating points for the nearest tabulated shape, quantizes,
and measures the reconstruction magnitudes the decoder will need.  The
decoder sees only the side information and the indices.

Side-info layout, little-endian::

    offset  size  field
    0       2     magic b"EZ"
    2       1     version (1)
    3       1     kind (0 EZZ, 1 SOEZZ, 2 OEZZ)
    4       1     flags (bit0 target unreachable, bit1 all-zero block)
    5       1     j
    6       4     lambda, float32
    10      2     a_count, u16
    12      4*n   a_1 .. a_n, float32
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ggd
from . import quantizers as qz
from .errors import DegenerateSourceError, DomainError, ParseError

__all__ = [
    "DEFAULT_ALPHA_GRID",
    "FLAG_UNREACHABLE",
    "FLAG_DEGENERATE",
    "OperatingPointTable",
    "SideInfo",
    "EncodeInfo",
    "EncodedBlock",
    "build_table",
    "select_entry",
    "adaptive_encode",
    "adaptive_decode",
    "side_info_serialize",
    "side_info_parse",
    "side_info_parse_prefix",
]

DEFAULT_ALPHA_GRID = (0.25, 0.4, 0.5, 0.67, 0.8, 1.0, 1.3, 2.0)

MAGIC = b"EZ"
VERSION = 1
FLAG_UNREACHABLE = 0x01
FLAG_DEGENERATE = 0x02
_HEADER = struct.Struct("<2sBBBBfH")
_KIND_CODE = {qz.Kind.EZZ: 0, qz.Kind.SOEZZ: 1, qz.Kind.OEZZ: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
# the uniform kinds are the j = 0 members of their zero-zone counterparts
_WIRE_KIND = {
    qz.Kind.USQ: qz.Kind.EZZ,
    qz.Kind.OUSQ: qz.Kind.OEZZ,
    qz.Kind.EZZ: qz.Kind.EZZ,
    qz.Kind.SOEZZ: qz.Kind.SOEZZ,
    qz.Kind.OEZZ: qz.Kind.OEZZ,
}


@dataclass(frozen=True)
class OperatingPointTable:
    """Unit-variance Pareto frontiers, one row per tabulated shape."""

    alpha_grid: tuple
    kind: qz.Kind
    rows: tuple

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid:
            raise DomainError("alpha_grid is empty")
        if len(self.rows) != len(grid):
            raise DomainError("one row per alpha is required")
        if any(not row for row in self.rows):
            raise DomainError("table rows must be nonempty")
        object.__setattr__(self, "alpha_grid", grid)
        object.__setattr__(self, "kind", qz.Kind.parse(self.kind))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))

    def nearest_row(self, alpha: float) -> int:
        """Row whose shape is closest to ``alpha`` on a log scale."""
        d = np.abs(np.log(np.asarray(self.alpha_grid)) - math.log(alpha))
        return int(np.argmin(d))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# operating-point table kind={self.kind.value} sigma2=1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "rate", "distortion", "j", "lambda"])
        for a, row in zip(self.alpha_grid, self.rows):
            for t in row:
                w.writerow([repr(a), repr(t.rate), repr(t.distortion), t.j, repr(t.lam)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "OperatingPointTable":
        lines = text.splitlines()
        kind = None
        body = []
        for line in lines:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("kind="):
                        kind = tok.split("=", 1)[1]
            elif line.strip():
                body.append(line)
        if kind is None:
            raise ParseError("table CSV lacks a kind= metadata line")
        reader = csv.DictReader(body)
        grid = []
        rows = {}
        try:
            for rec in reader:
                a = float(rec["alpha"])
                if a not in rows:
                    grid.append(a)
                    rows[a] = []
                rows[a].append(
                    qz.OperatingPoint(
                        float(rec["rate"]), float(rec["distortion"]), int(rec["j"]), float(rec["lambda"])
                    )
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed table CSV: {exc}") from None
        return cls(tuple(grid), qz.Kind.parse(kind), tuple(tuple(rows[a]) for a in grid))


def build_table(
    alpha_grid=DEFAULT_ALPHA_GRID,
    kind=qz.Kind.SOEZZ,
    j_range=None,
    lambda_grid=None,
) -> OperatingPointTable:
    """Model-based frontiers at unit variance for every shape in ``alpha_grid``."""
    kind = qz.Kind.parse(kind)
    grid = tuple(float(a) for a in alpha_grid)
    if not grid:
        raise DomainError("alpha_grid is empty")
    rows = tuple(
        tuple(qz.sweep_operating_points(ggd.GgdParams(a), kind, j_range, lambda_grid)) for a in grid
    )
    return OperatingPointTable(grid, kind, rows)


def select_entry(row, target: float) -> tuple[int, bool]:
    """Lowest-rate entry with distortion <= target, else the lowest-distortion one.

    Returns ``(index, unreachable)``.
    """
    for i, t in enumerate(row):
        if t.distortion <= target:
            return i, False
    best = min(range(len(row)), key=lambda i: row[i].distortion)
    return best, True


@dataclass(frozen=True)
class SideInfo:
    """What the decoder needs: kind, scale and transmitted magnitudes."""

    kind: qz.Kind
    j: int
    lam: float
    a_table: tuple = ()
    flags: int = 0

    def __post_init__(self):
        kind = _WIRE_KIND[qz.Kind.parse(self.kind)]
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "a_table", tuple(float(a) for a in self.a_table))
        if not 0 <= self.flags <= 0xFF:
            raise DomainError("flags must fit in one byte")
        if not 0 <= self.j <= qz.J_MAX:
            raise DomainError("j out of range")
        if self.degenerate:
            if self.lam != 0 or self.a_table:
                raise DomainError("an all-zero block carries no scale")
        else:
            # validates lambda and the magnitudes against their cells
            self.spec()

    @property
    def degenerate(self) -> bool:
        return bool(self.flags & FLAG_DEGENERATE)

    @property
    def unreachable(self) -> bool:
        return bool(self.flags & FLAG_UNREACHABLE)

    def spec(self) -> qz.QuantizerSpec:
        return qz.QuantizerSpec(self.kind, qz.EzzScale(self.j, self.lam), self.a_table)

    @property
    def payload_bytes(self) -> int:
        """Kind, j and lambda plus four bytes per magnitude."""
        return 6 + 4 * len(self.a_table)

    @property
    def size_bytes(self) -> int:
        return _HEADER.size + 4 * len(self.a_table)


def side_info_serialize(side: SideInfo) -> bytes:
    head = _HEADER.pack(
        MAGIC, VERSION, _KIND_CODE[side.kind], side.flags, side.j, side.lam, len(side.a_table)
    )
    return head + struct.pack(f"<{len(side.a_table)}f", *side.a_table)


def side_info_parse_prefix(buf, offset: int = 0) -> tuple[SideInfo, int]:
    """Parse one record starting at ``offset``; returns it and the bytes consumed."""
    if len(buf) - offset < _HEADER.size:
        raise ParseError("truncated side-info header")
    magic, version, code, flags, j, lam, count = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ParseError(f"unsupported side-info version {version}")
    if code not in _CODE_KIND:
        raise ParseError(f"unknown kind code {code}")
    end = offset + _HEADER.size + 4 * count
    if len(buf) < end:
        raise ParseError("truncated side-info magnitudes")
    table = struct.unpack_from(f"<{count}f", buf, offset + _HEADER.size)
    try:
        side = SideInfo(_CODE_KIND[code], j, lam, table, flags)
    except DomainError as exc:
        raise ParseError(f"inconsistent side info: {exc}") from None
    return side, end - offset


def side_info_parse(buf) -> SideInfo:
    side, used = side_info_parse_prefix(buf)
    if used != len(buf):
        raise ParseError(f"{len(buf) - used} trailing bytes after side info")
    return side


@dataclass(frozen=True)
class EncodeInfo:
    """Encoder-side measurements reported with every block."""

    n: int
    alpha_hat: float = math.nan
    sigma2_hat: float = 0.0
    mu_hat: float = 0.0
    alpha_clamped: bool = False
    row_alpha: float = math.nan
    table_rate: float = 0.0
    table_distortion: float = math.nan
    rate: float = 0.0
    distortion: float = 0.0
    side_bits: int = 0

    @property
    def gain_db(self) -> float:
        if self.distortion == 0:
            return math.inf
        return 10 * math.log10(self.sigma2_hat / self.distortion) if self.sigma2_hat > 0 else 0.0


@dataclass(frozen=True)
class EncodedBlock:
    side: SideInfo
    indices: np.ndarray
    info: EncodeInfo = field(compare=False, default=None)


def _f32(x: float) -> float:
    return float(np.float32(x))


def _f32_inside(a: float, lo: float, hi: float) -> float:
    """Nearest float32 to ``a`` that still lies in [lo, hi]."""
    v = np.float32(a)
    # compare in float64: a python float next to a float32 is cast down
    while float(v) < lo:
        v = np.nextafter(v, np.float32(np.inf))
    while float(v) > hi:
        v = np.nextafter(v, np.float32(-np.inf))
    return float(v)


def _zero_zone_scale(max_abs: float) -> float:
    """float32 step whose zero zone at j = J_MAX strictly contains max_abs."""
    lam = np.float32(max_abs / 2.0 ** (qz.J_MAX - 1))
    while not float(lam) * 2.0 ** (qz.J_MAX - 1) > max_abs:
        lam = np.nextafter(lam, np.float32(np.inf))
    return float(lam)


def _finish(x, side: SideInfo, info: dict) -> EncodedBlock:
    spec = side.spec()
    k = qz.quantize(spec.scale, x)
    y = qz.reconstruct(spec, k)
    info.update(
        rate=qz.plugin_entropy(k),
        distortion=float(np.mean((x - y) ** 2)),
        side_bits=8 * side.size_bytes,
    )
    return EncodedBlock(side, k, EncodeInfo(**info))


def adaptive_encode(samples, target_d: float, table: OperatingPointTable, kind=None) -> EncodedBlock:
    """Quantize one block to mean squared error ``target_d`` at the lowest tabulated rate."""
    x = np.asarray(samples, dtype=float).ravel()
    if not (target_d > 0 and math.isfinite(target_d)):
        raise DomainError("target distortion must be positive and finite")
    kind = _WIRE_KIND[qz.Kind.parse(kind if kind is not None else table.kind)]
    try:
        if x.size < 2:
            raise DegenerateSourceError("too few samples to model")
        params, est = ggd.estimate_params(x)
    except DegenerateSourceError:
        # nothing to model: decode to zeros
        side = SideInfo(kind, 0, 0.0, (), FLAG_DEGENERATE)
        info = EncodeInfo(
            n=int(x.size),
            distortion=float(np.mean(x * x)) if x.size else 0.0,
            side_bits=8 * side.size_bytes,
        )
        return EncodedBlock(side, np.zeros(x.size, dtype=np.int64), info)

    info = dict(
        n=est.n,
        alpha_hat=params.alpha,
        sigma2_hat=est.sigma2_hat,
        mu_hat=est.mu_hat,
        alpha_clamped=est.clamped,
    )
    if target_d >= est.sigma2_hat:
        # zero rate: everything falls in the zero zone
        side = SideInfo(kind, qz.J_MAX, _zero_zone_scale(float(np.max(np.abs(x)))))
        info.update(table_rate=0.0, table_distortion=1.0)
        return _finish(x, side, info)

    r = table.nearest_row(params.alpha)
    row = table.rows[r]
    idx, unreachable = select_entry(row, target_d / est.sigma2_hat)
    entry = row[idx]
    lam = _f32(entry.lam * math.sqrt(est.sigma2_hat))
    scale = qz.EzzScale(entry.j, lam)
    a_table = ()
    if kind.n_centroids != 0:
        cen, _ = qz.empirical_centroids(scale, x, max_k=kind.n_centroids)
        a_table = tuple(
            _f32_inside(a, *qz.cell_bounds(scale, k)) for k, a in enumerate(cen, start=1)
        )
    flags = FLAG_UNREACHABLE if unreachable else 0
    side = SideInfo(kind, entry.j, lam, a_table, flags)
    info.update(row_alpha=table.alpha_grid[r], table_rate=entry.rate, table_distortion=entry.distortion)
    return _finish(x, side, info)


def adaptive_decode(block: EncodedBlock) -> np.ndarray:
    """Reconstruction from the side information and indices alone."""
    k = np.asarray(block.indices, dtype=np.int64)
    if block.side.degenerate:
        return np.zeros(k.size)
    return qz.reconstruct(block.side.spec(), k)
