#!/usr/bin/env python3
"""Round trip a synthetic two-subband coefficient file through the codec.

Writes coefficients, a bands file, the container and the decoded values into
a working directory, then checks that the decoded MSE equals the reported one.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from ggdquant import cli, ggd


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", default="codec_demo")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--target-db", default="20")
    args = ap.parse_args(argv)

    d = Path(args.dir)
    d.mkdir(parents=True, exist_ok=True)
    x = np.concatenate([
        ggd.sample(ggd.GgdParams(0.5, 4.0), 8192, args.seed),
        ggd.sample(ggd.GgdParams(1.5, 0.25), 4096, args.seed + 1),
    ]).astype("<f4")
    x.tofile(d / "coef.f32")
    (d / "bands.txt").write_text("0,8192\n8192,12288\n")

    common = ["--format", "f32le", "--bands", str(d / "bands.txt")]
    rc = cli.main(["encode", str(d / "coef.f32"), *common, "--target-db", args.target_db,
                   "--out", str(d / "coef.ez"), "--report", str(d / "report.csv")])
    if rc:
        return rc
    rc = cli.main(["decode", str(d / "coef.ez"), "--format", "f32le", "--out", str(d / "decoded.f32")])
    if rc:
        return rc

    y = np.fromfile(d / "decoded.f32", dtype="<f4").astype(float)
    xs = x.astype(float)
    print((d / "report.csv").read_text(), end="")
    for i, (a, b) in enumerate(((0, 8192), (8192, 12288))):
        mse = np.mean((xs[a:b] - y[a:b]) ** 2)
        print(f"band {i}: decoded mse {float(mse)!r} gain {10 * np.log10(np.mean(xs[a:b] ** 2) / mse):.2f} dB")
    return 0


if __name__ == "__main__":
    sys.exit(main())
