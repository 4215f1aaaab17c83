"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric non-convergence.
"""

from __future__ import annotations

import argparse
import math
import os
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import adaptive
from . import experiments as ex
from . import ggd
from . import quantizers as qz
from . import ratedist as rd
from .errors import (
    DegenerateSourceError,
    DomainError,
    NonConvergenceError,
    ParseError,
    RangeError,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONV = 0, 1, 2, 3
_COUNT = struct.Struct("<I")

_DEFAULT_ALPHAS = {
    "fig3": (0.67,),
    "rdcurves": ex.FIG_ALPHAS,
    "losscurves": ex.FIG_ALPHAS,
    "soezz-table": adaptive.DEFAULT_ALPHA_GRID,
    "checkpoints": (2.0, 0.25),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- file I/O


@dataclass(frozen=True)
class CoefficientFile:
    values: np.ndarray
    bands: tuple  # ((start, end), ...), end exclusive


def read_values(path: str, fmt: str) -> np.ndarray:
    try:
        if fmt == "f32le":
            raw = Path(path).read_bytes()
            if len(raw) % 4:
                raise ParseError(f"{path}: length {len(raw)} is not a multiple of 4")
            x = np.frombuffer(raw, dtype="<f4").astype(float)
        else:
            x = np.array([float(t) for t in Path(path).read_text().split()], dtype=float)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise ParseError(f"{path}: non-finite coefficient")
    return x


def write_values(path: str, y: np.ndarray, fmt: str):
    """Emit values as 32-bit floats (binary or shortest round-trip text)."""
    y32 = np.asarray(y, dtype="<f4")
    if fmt == "f32le":
        data = y32.tobytes()
    else:
        data = "".join(f"{float(v)!r}\n" for v in y32).encode()
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def parse_bands(text: str, n: int) -> tuple:
    """``start,end`` lines (end exclusive) that tile ``[0, n)`` in order."""
    bands = []
    pos = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            a, b = (int(t) for t in line.split(","))
        except ValueError:
            raise ParseError(f"bands line {lineno}: expected 'start,end'") from None
        if a != pos or b < a:
            raise ParseError(f"bands line {lineno}: range {a},{b} does not continue at {pos}")
        bands.append((a, b))
        pos = b
    if pos != n:
        raise ParseError(f"bands cover [0, {pos}) but the input has {n} values")
    return tuple(bands)


def read_coefficients(path: str, fmt: str, bands_path: str | None) -> CoefficientFile:
    x = read_values(path, fmt)
    if bands_path is None:
        bands = ((0, x.size),)
    else:
        try:
            text = Path(bands_path).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read {bands_path}: {exc.strerror}") from None
        bands = parse_bands(text, x.size)
    return CoefficientFile(x, bands)


def write_container(blocks) -> bytes:
    out = bytearray()
    for b in blocks:
        k = np.asarray(b.indices, dtype=np.int64)
        if k.size and (k.min() < -(2**31) or k.max() >= 2**31):
            raise DomainError("quantization index does not fit in 32 bits")
        out += _COUNT.pack(k.size)
        out += adaptive.side_info_serialize(b.side)
        out += k.astype("<i4").tobytes()
    return bytes(out)


def read_container(buf: bytes) -> list:
    blocks = []
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < _COUNT.size:
            raise ParseError("truncated section header")
        (n,) = _COUNT.unpack_from(buf, pos)
        pos += _COUNT.size
        side, used = adaptive.side_info_parse_prefix(buf, pos)
        pos += used
        end = pos + 4 * n
        if end > len(buf):
            raise ParseError("truncated index payload")
        k = np.frombuffer(buf[pos:end], dtype="<i4").astype(np.int64)
        pos = end
        blocks.append(adaptive.EncodedBlock(side, k))
    return blocks


def decode_blocks(blocks) -> np.ndarray:
    parts = [adaptive.adaptive_decode(b) for b in blocks]
    return np.concatenate(parts) if parts else np.zeros(0)


def _emit(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv(header, rows, meta=None, summary=None) -> str:
    t = ex.CsvTable("", list(header), rows, meta or {"tool": f"ggdquant-{__version__}"}, summary or {})
    return t.to_csv()


# ---------------------------------------------------------------- commands


def cmd_estimate(args) -> int:
    cf = read_coefficients(args.input, args.format, args.bands)
    rows = []
    for i, (a, b) in enumerate(cf.bands):
        x = cf.values[a:b]
        try:
            p, est = ggd.estimate_params(x)
            rows.append([i, a, b, est.n, p.alpha, est.sigma2_hat, est.mu_hat, est.clamped, False])
        except (DegenerateSourceError, DomainError):
            rows.append([i, a, b, x.size, math.nan, float(np.mean(x * x)) if x.size else 0.0,
                         float(np.mean(np.abs(x))) if x.size else 0.0, False, True])
    header = ["band", "start", "end", "n", "alpha_hat", "sigma2_hat", "mu_hat", "clamped", "degenerate"]
    _emit(_csv(header, rows), args.out)
    return EXIT_OK


def _experiment(args) -> int:
    alphas = tuple(args.alpha) if args.alpha else _DEFAULT_ALPHAS[args.command]
    cfg = ex.ExperimentConfig(
        experiment=args.command,
        alphas=alphas,
        n=args.n,
        seed=args.seed,
        m_points=args.m_points,
        span=args.span,
        n_slopes=args.n_slopes,
        tol=args.tol,
        mode=args.mode,
    )
    tables = ex.run(cfg)
    out = args.out
    if out is None or out == "-":
        sys.stdout.write("\n".join(t.to_csv() for t in tables))
    elif len(tables) > 1 or out.endswith(os.sep) or os.path.isdir(out):
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        for t in tables:
            (d / f"{t.name}.csv").write_text(t.to_csv())
    else:
        Path(out).write_text(tables[0].to_csv())
    return EXIT_OK


def _targets(args, n_bands: int) -> list:
    raw = args.target_db if args.target_db is not None else args.target_mse
    try:
        vals = [float(t) for t in raw.split(",")]
    except ValueError:
        raise DomainError(f"bad target list {raw!r}") from None
    if len(vals) == 1:
        vals *= n_bands
    if len(vals) != n_bands:
        raise DomainError(f"{len(vals)} targets given for {n_bands} subbands")
    if args.target_mse is not None and not all(v > 0 and math.isfinite(v) for v in vals):
        raise DomainError("MSE targets must be positive")
    if args.target_db is not None and not all(math.isfinite(v) for v in vals):
        raise DomainError("dB targets must be finite")
    return vals


def _load_table(args, alphas) -> adaptive.OperatingPointTable:
    if args.table:
        try:
            return adaptive.OperatingPointTable.from_csv(Path(args.table).read_text())
        except OSError as exc:
            raise ParseError(f"cannot read {args.table}: {exc.strerror}") from None
    kind = qz.Kind.parse(args.kind or "soezz")
    grid = np.asarray(adaptive.DEFAULT_ALPHA_GRID)
    # only the rows the encoder will select
    need = sorted({float(grid[np.argmin(np.abs(np.log(grid) - math.log(a)))]) for a in alphas})
    if not need:
        need = [float(grid[0])]
    return adaptive.build_table(tuple(need), kind)


def cmd_encode(args) -> int:
    cf = read_coefficients(args.input, args.format, args.bands)
    targets = _targets(args, len(cf.bands))
    fits = []
    for a, b in cf.bands:
        x = cf.values[a:b]
        try:
            fits.append(ggd.estimate_params(x))
        except (DegenerateSourceError, DomainError):
            fits.append(None)
    table = _load_table(args, [f[0].alpha for f in fits if f is not None])
    kind = args.kind or table.kind

    blocks, rows = [], []
    tot_bits = tot_side = tot_err = 0.0
    for i, ((a, b), fit, t) in enumerate(zip(cf.bands, fits, targets)):
        x = cf.values[a:b]
        if args.target_db is not None:
            s2 = fit[1].sigma2_hat if fit else 1.0
            t = s2 / 10 ** (t / 10)
        blk = adaptive.adaptive_encode(x, t, table, kind)
        blocks.append(blk)
        # distortion of what decode will emit (32-bit output samples)
        y = adaptive.adaptive_decode(blk).astype(np.float32).astype(float)
        err = float(np.sum((x - y) ** 2))
        d = err / x.size if x.size else 0.0
        info, side = blk.info, blk.side
        gain = 10 * math.log10(info.sigma2_hat / d) if d > 0 and info.sigma2_hat > 0 else math.inf
        rows.append([i, a, b, x.size, info.alpha_hat, info.row_alpha, side.kind.value, side.j, side.lam,
                     info.rate, info.table_rate, info.side_bits, t, d, gain, side.flags])
        tot_bits += info.rate * x.size
        tot_side += info.side_bits
        tot_err += err
    payload = write_container(blocks)
    if args.out == "-":
        sys.stdout.buffer.write(payload)
    else:
        Path(args.out).write_bytes(payload)

    n = cf.values.size
    header = ["band", "start", "end", "n", "alpha_hat", "table_alpha", "kind", "j", "lambda",
              "rate", "table_rate", "side_bits", "target_mse", "distortion", "gain_db", "flags"]
    summary = {
        "total_rate": tot_bits / n if n else 0.0,
        "total_rate_with_side": (tot_bits + tot_side) / n if n else 0.0,
        "total_distortion": tot_err / n if n else 0.0,
        "unreachable": sum(1 for b in blocks if b.side.unreachable),
    }
    text = _csv(header, rows, summary=summary)
    if args.report:
        _emit(text, args.report)
    elif args.out != "-":
        sys.stdout.write(text)
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        buf = Path(args.input).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {args.input}: {exc.strerror}") from None
    y = decode_blocks(read_container(buf))
    write_values(args.out, y, args.format)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _positive_int(s):
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ggdquant", description="GGD rate-distortion tools and adaptive quantizer.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def io_args(sp, out_required=False):
        sp.add_argument("input", help="coefficient file")
        sp.add_argument("--format", choices=("text", "f32le"), default="text")
        sp.add_argument("--bands", metavar="PATH", help="subband file of 'start,end' lines")
        sp.add_argument("--out", metavar="PATH", required=out_required, default=None)

    sp = sub.add_parser("estimate", help="per-subband GGD parameter estimates")
    io_args(sp)
    sp.set_defaults(func=cmd_estimate)

    for name, help_ in (
        ("fig3", "theoretical vs empirical R(D)"),
        ("rdcurves", "R(D), bounds and uniform quantizers"),
        ("losscurves", "coding-gain loss per quantizer kind"),
        ("soezz-table", "SOEZZ operating-point table"),
        ("checkpoints", "headline numbers at D = 0.01"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--alpha", type=float, nargs="+", help="shape parameters")
        sp.add_argument("--n", type=_positive_int, default=10**6, help="Monte Carlo sample count")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (required for sampling)")
        sp.add_argument("--out", metavar="PATH", help="output file, or directory for several tables")
        sp.add_argument("--m-points", type=_positive_int, default=rd.DEFAULT_M_POINTS)
        sp.add_argument("--span", type=float, default=None, help="grid half-width in sigmas")
        sp.add_argument("--n-slopes", type=_positive_int, default=rd.DEFAULT_N_SLOPES)
        sp.add_argument("--tol", type=float, default=rd.DEFAULT_TOL, help="Blahut gap tolerance in bits")
        sp.add_argument("--mode", choices=("auto", "model", "simulation"), default="auto")
        sp.set_defaults(func=_experiment)

    sp = sub.add_parser("encode", help="adaptive quantization to a container")
    io_args(sp, out_required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--target-db", help="target gain in dB (one value or one per subband)")
    g.add_argument("--target-mse", help="target MSE (one value or one per subband)")
    sp.add_argument("--kind", choices=("ezz", "soezz", "oezz"))
    sp.add_argument("--table", metavar="PATH", help="operating-point table CSV")
    sp.add_argument("--report", metavar="PATH", help="write the report here instead of stdout")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="reconstruct coefficients from a container")
    sp.add_argument("input", help="container file")
    sp.add_argument("--out", metavar="PATH", required=True)
    sp.add_argument("--format", choices=("text", "f32le"), default="text")
    sp.set_defaults(func=cmd_decode)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"ggdquant: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (DomainError, ParseError, RangeError, DegenerateSourceError) as exc:
        print(f"ggdquant: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
