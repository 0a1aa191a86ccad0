"""Shared fixtures.

The surrogate pipeline (labeling tens of thousands of Monte Carlo
configurations and training the regressor) is expensive, so its products are
cached on disk under tests/.cache keyed by the generating parameters; delete
the directory to force a rebuild.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from cspez.belief import PursuerBelief, RngStream
from cspez.features import (FeatureRanges, TrainingSet, configs_from_features,
                            generate_labels, latin_hypercube)
from cspez.mlp import load_model, save_model
from cspez.training import Hyper, train

CACHE = Path(__file__).parent / ".cache"

ROOT_SEED = 7
TRAIN_N = 50_000
TEST_N = 20_000
MC_N = 10_000


def scenario_belief() -> PursuerBelief:
    return PursuerBelief.from_blocks(
        [0.0, 0.0, np.pi / 4, 0.2, 1.0, 2.0],
        [[0.025, 0.04], [0.04, 0.1]], 0.2, 0.005, 0.1, 0.3)


@pytest.fixture(scope="session")
def belief():
    return scenario_belief()


def _labeled_set(tag: str, n: int, path_index: int) -> TrainingSet:
    CACHE.mkdir(exist_ok=True)
    cached = CACHE / f"{tag}_s{ROOT_SEED}_n{n}_mc{MC_N}.npz"
    if cached.exists():
        return TrainingSet.load(cached)
    ranges = FeatureRanges()
    rng = RngStream(ROOT_SEED, (path_index,)).generator()
    features = latin_hypercube(n, ranges, rng)
    ts = generate_labels(features, MC_N,
                         RngStream(ROOT_SEED, (path_index, 1)), ranges)
    ts.save(cached)
    return ts


@pytest.fixture(scope="session")
def training_set() -> TrainingSet:
    return _labeled_set("train", TRAIN_N, 10)


@pytest.fixture(scope="session")
def test_set() -> TrainingSet:
    """Held-out labeled configurations, disjoint stream from training."""
    return _labeled_set("test", TEST_N, 20)


@pytest.fixture(scope="session")
def surrogate(training_set):
    """(model, report_dict) trained on the session training set."""
    CACHE.mkdir(exist_ok=True)
    mpath = CACHE / f"model_s{ROOT_SEED}_n{TRAIN_N}_mc{MC_N}.bin"
    rpath = mpath.with_suffix(".json")
    if mpath.exists() and rpath.exists():
        return load_model(mpath), json.loads(rpath.read_text())
    model, report = train(training_set, Hyper(seed=ROOT_SEED))
    save_model(model, mpath)
    summary = {"train_mse": report.train_mse, "val_mse": report.val_mse,
               "val_rmse": report.val_rmse, "epochs_run": report.epochs_run}
    rpath.write_text(json.dumps(summary, indent=2) + "\n")
    return model, summary


@pytest.fixture(scope="session")
def model(surrogate):
    return surrogate[0]
