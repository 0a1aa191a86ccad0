#!/usr/bin/env python3
"""Label a Latin-hypercube training set and fit the MLP surrogate.

Writes the labeled data (NPZ) and the trained model (binary) into the
output directory. Point the scenario config's ``model_path`` at the
resulting ``model.bin`` to enable the ``nn`` estimator elsewhere.
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
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = ["--config", args.config, "--workers", str(args.workers)]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]

    rc = cli(["label", *common, "--out", str(out / "training_set.npz")])
    if rc:
        return rc
    return cli(["train", *common, "--out", str(out / "model.bin")])


if __name__ == "__main__":
    sys.exit(run())
