#!/usr/bin/env python3
"""Regenerate every experiment table into a results directory.

    python3 scripts/run_experiments.py                 # all experiments
    python3 scripts/run_experiments.py fig3 checkpoints --out results
"""

import argparse
import sys
import time
from pathlib import Path

from ggdquant import experiments as ex
from ggdquant.cli import _DEFAULT_ALPHAS

SEED = 20240117


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("which", nargs="*", metavar="EXPERIMENT", help=", ".join(ex.EXPERIMENTS))
    ap.add_argument("--out", default="results")
    ap.add_argument("--n", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=SEED)
    args = ap.parse_args(argv)
    unknown = set(args.which) - set(ex.EXPERIMENTS)
    if unknown:
        ap.error(f"unknown experiment(s): {', '.join(sorted(unknown))}")
    which = args.which or list(ex.EXPERIMENTS)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in which:
        t0 = time.perf_counter()
        cfg = ex.ExperimentConfig(name, _DEFAULT_ALPHAS[name], n=args.n, seed=args.seed)
        for table in ex.run(cfg):
            path = out / f"{table.name}.csv"
            path.write_text(table.to_csv())
            if table.summary:
                print(f"{path}: " + " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                                              for k, v in table.summary.items()))
        print(f"{name}: {time.perf_counter() - t0:.1f} s")
        if name == "checkpoints":
            for row in table.rows:
                print(f"  {'PASS' if row[4] else 'FAIL'} {row[0]} = {row[1]:.4f} (target {row[2]} +/- {row[3]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
