#!/usr/bin/env python3
"""Estimator accuracy study: error metrics, level-set grids, trace bins.

Produces, in the output directory:
  metrics.csv        per-method MSE / AAE / MaxAE against the MC baseline
  trace_bins.csv     median error per covariance-trace bin
  levelset_<m>.csv   probability grid and per-cell error for each method
"""
import argparse
import pathlib
import sys

from cspez.cli import main as cli

REPO = pathlib.Path(__file__).resolve().parents[1]


def run() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(REPO / "configs" / "scenario.toml"))
    ap.add_argument("--out-dir", default=str(REPO / "results"))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--methods", nargs="+",
                    default=["linear", "quadratic", "nn"])
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = ["--config", args.config, "--workers", str(args.workers)]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]

    for sub, name in [("compare", "metrics.csv"),
                      ("trace-bins", "trace_bins.csv")]:
        rc = cli([sub, *common, "--out", str(out / name)])
        if rc:
            return rc
    for method in args.methods:
        rc = cli(["cspez-eval", *common, "--method", method,
                  "--out", str(out / f"levelset_{method}.csv")])
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(run())
