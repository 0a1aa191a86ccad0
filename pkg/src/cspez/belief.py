"""Gaussian belief over the six pursuer parameters.

Covariance is structured: a full 2x2 position block, diagonal variances for
heading, turn radius, range, and speed, and zeros elsewhere (position x/y are
the only correlated pair).  Heading is treated as a plain Gaussian coordinate,
valid for small heading variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dual import erf_approx
from .geometry import PARAM_FLOOR

# Eigenvalues this far below zero (relative to trace) are treated as rounding
# noise from user-supplied covariances and clamped; worse is an error.
_EIG_FLOOR = 1e-10

_BELIEF_KEYS = {"mean", "cov_pos", "var_psi", "var_a", "var_R", "var_v"}


class SingularCovarianceError(ValueError):
    """Covariance is singular where a density or factor is required."""


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream: counter-based Philox keyed by seed.

    Substreams come from ``split``, which extends the spawn path; the same
    seed and path always produce the same sample sequence.
    """

    seed: int
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def split(self, n: int):
        return [RngStream(self.seed, self.path + (i,)) for i in range(n)]


@dataclass(frozen=True)
class PursuerBelief:
    mean: np.ndarray
    cov: np.ndarray
    _sqrt: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(6)
        cov = np.asarray(self.cov, dtype=float).reshape(6, 6)
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ValueError("belief mean/covariance must be finite")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        mask = np.zeros((6, 6), dtype=bool)
        mask[:2, :2] = True
        np.fill_diagonal(mask, True)
        if np.any(cov[~mask] != 0.0):
            raise ValueError(
                "only the position block and the diagonal may be nonzero")
        w, v = np.linalg.eigh(cov)
        floor = -_EIG_FLOOR * max(np.trace(cov), 1.0)
        if w.min() < floor:
            raise ValueError("covariance is not positive semidefinite")
        wc = np.clip(w, 0.0, None)
        cov = (v * wc) @ v.T
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_sqrt", v * np.sqrt(wc))

    @classmethod
    def from_blocks(cls, mean, cov_pos, var_psi, var_a, var_R, var_v):
        cov = np.zeros((6, 6))
        cov[:2, :2] = np.asarray(cov_pos, dtype=float).reshape(2, 2)
        cov[2, 2] = var_psi
        cov[3, 3] = var_a
        cov[4, 4] = var_R
        cov[5, 5] = var_v
        return cls(np.asarray(mean, dtype=float), cov)

    # -- serialization (strict JSON schema) ---------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "mean": [float(v) for v in self.mean],
            "cov_pos": [[float(self.cov[i, j]) for j in range(2)]
                        for i in range(2)],
            "var_psi": float(self.cov[2, 2]),
            "var_a": float(self.cov[3, 3]),
            "var_R": float(self.cov[4, 4]),
            "var_v": float(self.cov[5, 5]),
        })

    @classmethod
    def from_json(cls, text: str) -> "PursuerBelief":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, obj: dict) -> "PursuerBelief":
        if not isinstance(obj, dict):
            raise ValueError("belief must be a JSON object")
        extra = set(obj) - _BELIEF_KEYS
        missing = _BELIEF_KEYS - set(obj)
        if extra:
            raise ValueError(f"unknown belief keys: {sorted(extra)}")
        if missing:
            raise ValueError(f"missing belief keys: {sorted(missing)}")
        return cls.from_blocks(obj["mean"], obj["cov_pos"], obj["var_psi"],
                               obj["var_a"], obj["var_R"], obj["var_v"])


def density(b: PursuerBelief, tau) -> float:
    """Multivariate normal density of the belief at a 6-vector."""
    tau = np.asarray(tau, dtype=float).reshape(6)
    sign, logdet = np.linalg.slogdet(b.cov)
    if sign <= 0:
        raise SingularCovarianceError("covariance must be positive definite")
    d = tau - b.mean
    q = d @ np.linalg.solve(b.cov, d)
    return float(np.exp(-0.5 * (q + logdet + 6 * math.log(2 * math.pi))))


def sample(b: PursuerBelief, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n parameter rows via the eigen square-root factor of the covariance.

    Turn radius, range, and speed are floored at PARAM_FLOOR so every row is a
    valid (if extreme) pursuer.
    """
    z = rng.standard_normal((n, 6))
    out = b.mean + z @ b._sqrt.T
    out[:, 3:] = np.maximum(out[:, 3:], PARAM_FLOOR)
    return out


def gaussian_cdf(x, mu, var):
    """P(X <= x) for X ~ N(mu, var); var = 0 degenerates to the indicator."""
    if np.any(np.asarray(var) < 0):
        raise ValueError("variance must be nonnegative")
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if x.ndim == 0 and mu.ndim == 0 and var.ndim == 0:
        if var == 0.0:
            return 1.0 if x >= mu else 0.0
        return 0.5 * (1.0 + erf_approx((x - mu) / math.sqrt(2.0 * var)))
    safe = np.where(var > 0.0, var, 1.0)
    smooth = 0.5 * (1.0 + erf_approx((x - mu) / np.sqrt(2.0 * safe)))
    return np.where(var > 0.0, smooth, (x >= mu).astype(float))
