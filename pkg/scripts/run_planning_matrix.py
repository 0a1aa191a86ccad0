#!/usr/bin/env python3
"""Chance-constrained planning matrix: every estimator at every threshold.

Writes the summary table (final times, post-hoc MC probabilities, solve
times) plus one trajectory JSON per (method, epsilon) pair. Requires a
trained surrogate; set ``model_path`` in the config or pass --model.
"""
import argparse
import json
import pathlib
import sys
import tempfile

from cspez.cli import main as cli
from cspez.config import load_config

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

REPO = pathlib.Path(__file__).resolve().parents[1]


def _with_model_path(config_path: str, model: str) -> str:
    """Re-emit the config as JSON with model_path injected."""
    path = pathlib.Path(config_path)
    if path.suffix == ".json":
        raw = json.loads(path.read_text())
    else:
        raw = tomllib.loads(path.read_text())
    raw["model_path"] = model
    with tempfile.NamedTemporaryFile(
            "w", suffix=".json", delete=False) as fh:
        json.dump(raw, fh)
    return fh.name


def run() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(REPO / "configs" / "scenario.toml"))
    ap.add_argument("--out-dir", default=str(REPO / "results"))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--model", default=None,
                    help="surrogate model path (overrides the config)")
    args = ap.parse_args()

    config_path = args.config
    if args.model is not None:
        config_path = _with_model_path(config_path, args.model)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = ["--config", config_path]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]

    rc = cli(["table2", *common, "--out", str(out / "planning_matrix.csv")])
    if rc:
        return rc
    cfg = load_config(config_path)
    for method in ("linear", "quadratic", "nn"):
        for eps in cfg.eval.thresholds:
            rc = cli(["plan", *common, "--method", method,
                      "--epsilon", str(eps),
                      "--out", str(out / f"plan_{method}_{eps}.json")])
            if rc:
                return rc
    return 0


if __name__ == "__main__":
    sys.exit(run())
