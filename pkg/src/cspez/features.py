"""Surrogate input features, Latin hypercube sampling, and label generation.

The 14 features put the pursuer mean at the origin: means of the three scale
parameters, the seven covariance entries, and the evader state relative to
the pursuer mean.  Training configurations are sampled directly in feature
space and labeled with Monte Carlo probabilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import PursuerBelief, RngStream
from .geometry import EvaderState

FEATURE_NAMES = (
    "mu_a", "mu_R", "mu_vP",
    "var_xP", "var_yP", "cov_xPyP",
    "var_psiP", "var_a", "var_R", "var_vP",
    "rel_x", "rel_y", "rel_psi", "v_E",
)

_COV_XY = FEATURE_NAMES.index("cov_xPyP")
_VAR_X = FEATURE_NAMES.index("var_xP")
_VAR_Y = FEATURE_NAMES.index("var_yP")


class RangeConfigError(ValueError):
    """Feature ranges cannot produce valid covariances."""


@dataclass(frozen=True)
class FeatureRanges:
    """Admissible box for each feature, lo <= x <= hi.

    Defaults bracket the example scenario (speed ratio stays below one);
    they are deliberately config-level so they can be revised in one place.
    """

    lo: np.ndarray = field(default_factory=lambda: np.array(
        [0.05, 0.5, 1.0, 0.0, 0.0, -0.15, 0.0, 0.0, 0.0, 0.0,
         -4.0, -4.0, -np.pi, 0.3]))
    hi: np.ndarray = field(default_factory=lambda: np.array(
        [0.5, 2.0, 3.0, 0.15, 0.15, 0.15, 0.3, 0.01, 0.15, 0.4,
         4.0, 4.0, np.pi, 1.5]))

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(14)
        hi = np.asarray(self.hi, dtype=float).reshape(14)
        if not np.all(lo < hi):
            raise RangeConfigError("every range needs lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["lo"]), np.asarray(d["hi"]))


def build_features(b: PursuerBelief, e: EvaderState) -> np.ndarray:
    """Feature vector in the fixed order of FEATURE_NAMES."""
    m = b.mean
    c = b.cov
    return np.array([
        m[3], m[4], m[5],
        c[0, 0], c[1, 1], c[0, 1],
        c[2, 2], c[3, 3], c[4, 4], c[5, 5],
        e.x - m[0], e.y - m[1], e.heading - m[2], e.speed,
    ])


def config_from_features(fv) -> tuple[PursuerBelief, EvaderState]:
    """Canonical configuration for a feature row: pursuer mean at the origin
    with zero heading."""
    fv = np.asarray(fv, dtype=float).reshape(14)
    b = PursuerBelief.from_blocks(
        [0.0, 0.0, 0.0, fv[0], fv[1], fv[2]],
        [[fv[3], fv[5]], [fv[5], fv[4]]], fv[6], fv[7], fv[8], fv[9])
    e = EvaderState(fv[10], fv[11], fv[12], fv[13])
    return b, e


def configs_from_features(features):
    """(means, covs, evaders) arrays for the batched estimators."""
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    means = np.zeros((n, 6))
    means[:, 3:] = features[:, :3]
    covs = np.zeros((n, 6, 6))
    covs[:, 0, 0] = features[:, 3]
    covs[:, 1, 1] = features[:, 4]
    covs[:, 0, 1] = covs[:, 1, 0] = features[:, 5]
    for k, idx in enumerate(range(6, 10)):
        covs[:, 2 + k, 2 + k] = features[:, idx]
    evaders = features[:, 10:14].copy()
    return means, covs, evaders


def latin_hypercube(n: int, ranges: FeatureRanges,
                    rng: np.random.Generator) -> np.ndarray:
    """One sample per stratum per dimension over the feature box.

    The position covariance must keep the implied 2x2 block PSD; offending
    rows get their cross-covariance redrawn (rejection), which sacrifices
    stratification in that one dimension only.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    x = np.empty((n, 14))
    for d in range(14):
        strata = rng.permutation(n)
        u = rng.random(n)
        x[:, d] = ranges.lo[d] + (strata + u) / n * (ranges.hi[d] - ranges.lo[d])
    bound = np.sqrt(x[:, _VAR_X] * x[:, _VAR_Y])
    lo, hi = ranges.lo[_COV_XY], ranges.hi[_COV_XY]
    draws = 0
    bad = np.abs(x[:, _COV_XY]) > bound
    while np.any(bad):
        k = int(bad.sum())
        draws += k
        if draws > 100 * n:
            raise RangeConfigError(
                "covariance ranges keep violating positive semidefiniteness")
        x[bad, _COV_XY] = lo + rng.random(k) * (hi - lo)
        bad = np.abs(x[:, _COV_XY]) > bound
    return x


@dataclass(frozen=True)
class TrainingSet:
    features: np.ndarray  # (N, 14)
    labels: np.ndarray    # (N,), probabilities
    meta: dict

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if labels.ndim != 1 or features.shape != (labels.shape[0], 14):
            raise ValueError("features must be (N, 14) with N labels")
        if np.any((labels < 0) | (labels > 1)):
            raise ValueError("labels must be probabilities")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def save(self, path):
        path = Path(path)
        np.savez(path, features=self.features, labels=self.labels)
        sidecar = path.with_suffix(path.suffix + ".json") \
            if path.suffix != ".npz" else path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.meta, indent=2) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        data = np.load(path)
        sidecar = path.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(data["features"], data["labels"], meta)


def generate_labels(features, mc_n: int, rng_stream: RngStream,
                    ranges: FeatureRanges = None) -> TrainingSet:
    """Monte Carlo ground-truth labels for feature configurations."""
    if mc_n < 1_000:
        raise ValueError("label accuracy requires at least 1000 MC samples")
    from .estimators import mc_cspez_batch
    features = np.asarray(features, dtype=float)
    means, covs, evaders = configs_from_features(features)
    labels = mc_cspez_batch(means, covs, evaders, mc_n, rng_stream)
    meta = {
        "mc_n": int(mc_n),
        "seed": int(rng_stream.seed),
        "rng_path": list(rng_stream.path),
        "n": int(features.shape[0]),
    }
    if ranges is not None:
        meta["ranges"] = ranges.to_dict()
    return TrainingSet(features, labels, meta)
