"""Engagement-probability estimators under pursuer-parameter uncertainty.

Four routes to P(z <= 0): Monte Carlo over parameter samples, first- and
second-order moment matching pushed through a Gaussian CDF, and a trained
MLP surrogate.  The quadratic variance uses the exact Gaussian quadratic-form
coefficient 1/2 on tr(H S H S); the synthetic-quadratic oracle in the test
suite pins this down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual, geometry
from .belief import PursuerBelief, gaussian_cdf
from .geometry import EvaderState, PARAM_FLOOR

MC_DEFAULT_N = 10_000
MC_LABEL_N = 100_000


@dataclass(frozen=True)
class CspezEstimate:
    probability: float
    method: str  # "mc" | "linear" | "quadratic" | "nn"
    mu_z: float = None
    var_z: float = None
    n_samples: int = None
    degraded: bool = False
    extrapolated: bool = False

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")


def mc_cspez(b: PursuerBelief, e: EvaderState, n: int,
             rng: np.random.Generator) -> CspezEstimate:
    """Monte Carlo estimate: fraction of parameter draws with z <= 0."""
    if n < 1:
        raise ValueError("need at least one sample")
    from .belief import sample
    thetas = sample(b, rng, n)
    z = geometry.ez_batch(thetas, e)
    p = float(np.count_nonzero(z <= 0.0)) / n
    return CspezEstimate(probability=p, method="mc", n_samples=n)


def _z_of_theta(e: EvaderState):
    def f(theta):
        px, py, psi, a, rng_, v_p = theta
        return geometry.ez_core(e.x, e.y, e.heading, e.speed,
                                px, py, psi, a, rng_, v_p)
    return f


def linear_moments(z0, grad, cov):
    mu = z0
    var = float(grad @ cov @ grad)
    return mu, var


def quadratic_moments(z0, grad, hess, cov):
    hs = hess @ cov
    mu = z0 + 0.5 * float(np.trace(hs))
    var = float(grad @ cov @ grad) + 0.5 * float(np.trace(hs @ hs))
    return mu, max(var, 0.0)


def _cdf_estimate(method, mu, var, b, e):
    if not (np.isfinite(mu) and np.isfinite(var)):
        # Discontinuity at the expansion point: fall back to the
        # deterministic indicator rather than propagating NaN.
        z0 = geometry.ez_value(e, geometry.PursuerParams.from_vector(
            np.concatenate([b.mean[:3], np.maximum(b.mean[3:], PARAM_FLOOR)])))
        return CspezEstimate(probability=1.0 if z0 <= 0 else 0.0,
                             method=method, degraded=True)
    p = gaussian_cdf(0.0, mu, var)
    return CspezEstimate(probability=float(p), method=method,
                         mu_z=float(mu), var_z=float(var))


def linear_cspez(b: PursuerBelief, e: EvaderState) -> CspezEstimate:
    """First-order expansion about the parameter mean, Gaussian CDF at zero."""
    f = _z_of_theta(e)
    r = f(dual.variables(b.mean))
    z0 = dual.value(r)
    grad = np.array([dual.value(x) for x in r.eps])
    if not np.isfinite(grad).all():
        return _cdf_estimate("linear", np.nan, np.nan, b, e)
    mu, var = linear_moments(z0, grad, b.cov)
    return _cdf_estimate("linear", mu, var, b, e)


def quadratic_cspez(b: PursuerBelief, e: EvaderState) -> CspezEstimate:
    """Second-order expansion: Hessian corrections to mean and variance."""
    f = _z_of_theta(e)
    z0, grad, hess = dual.value_grad_hess(f, b.mean)
    if not (np.isfinite(grad).all() and np.isfinite(hess).all()):
        return _cdf_estimate("quadratic", np.nan, np.nan, b, e)
    mu, var = quadratic_moments(z0, grad, hess, b.cov)
    return _cdf_estimate("quadratic", mu, var, b, e)


def nn_cspez(model, b: PursuerBelief, e: EvaderState) -> CspezEstimate:
    """Surrogate estimate; flags queries outside the model's training box."""
    from .features import build_features
    from .mlp import forward, in_training_box
    fv = build_features(b, e)
    p = float(forward(model, fv))
    return CspezEstimate(probability=p, method="nn",
                         extrapolated=not in_training_box(model, fv))


# -- batched moment estimators (used by the evaluation pipeline) -------------


def _batch_duals(means, order):
    """Wrap (N,6) parameter means as duals with array leaves."""
    cols = [np.ascontiguousarray(means[:, i]) for i in range(6)]
    if order == 1:
        return [dual.Dual(cols[i], [1.0 if j == i else 0.0 for j in range(6)])
                for i in range(6)]
    out = []
    for i in range(6):
        inner = dual.Dual(cols[i], [1.0 if j == i else 0.0 for j in range(6)])
        eps = [dual.Dual(1.0 if j == i else 0.0, [0.0] * 6) for j in range(6)]
        out.append(dual.Dual(inner, eps))
    return out


def _ez_batch_theta(theta_duals, ev):
    ex, ey, psi_e, v_e = (ev[:, 0], ev[:, 1], ev[:, 2], ev[:, 3])
    px, py, psi, a, rng_, v_p = theta_duals
    return geometry.ez_core(ex, ey, psi_e, v_e, px, py, psi, a, rng_, v_p)


def linear_cspez_batch(means, covs, evaders):
    """Linear estimates for N configurations at once.

    means: (N,6), covs: (N,6,6), evaders: (N,4) rows (x, y, heading, speed).
    Returns (p, mu, var) arrays of shape (N,).
    """
    means = np.asarray(means, dtype=float)
    r = _ez_batch_theta(_batch_duals(means, 1), np.asarray(evaders, float))
    mu = np.asarray(dual.value(r), dtype=float)
    grad = np.stack([np.broadcast_to(np.asarray(dual.value(g), float), mu.shape)
                     for g in r.eps])                       # (6, N)
    var = np.einsum("in,nij,jn->n", grad, covs, grad)
    return _finish_cdf_batch(mu, var, means, evaders)


def quadratic_cspez_batch(means, covs, evaders):
    """Quadratic estimates for N configurations at once."""
    means = np.asarray(means, dtype=float)
    r = _ez_batch_theta(_batch_duals(means, 2), np.asarray(evaders, float))
    z0 = np.asarray(dual.value(r), dtype=float)
    n = z0.shape[0]
    grad = np.stack([np.broadcast_to(np.asarray(dual.value(r.val.eps[i]), float), z0.shape)
                     for i in range(6)])                    # (6, N)
    hess = np.empty((6, 6, n))
    for i in range(6):
        for j in range(6):
            hess[i, j] = np.broadcast_to(
                np.asarray(dual.value(r.eps[i].eps[j]), float), z0.shape)
    hess = 0.5 * (hess + hess.transpose(1, 0, 2))
    hs = np.einsum("ijn,njk->ikn", hess, covs)              # H S, (6,6,N)
    mu = z0 + 0.5 * np.einsum("iin->n", hs)
    var = (np.einsum("in,nij,jn->n", grad, covs, grad)
           + 0.5 * np.einsum("ijn,jin->n", hs, hs))
    return _finish_cdf_batch(mu, np.maximum(var, 0.0), means, evaders)


def _finish_cdf_batch(mu, var, means, evaders):
    p = gaussian_cdf(0.0, mu, var)
    bad = ~(np.isfinite(mu) & np.isfinite(var))
    if np.any(bad):
        means = np.asarray(means, float)[bad].copy()
        means[:, 3:] = np.maximum(means[:, 3:], PARAM_FLOOR)
        z0 = np.empty(means.shape[0])
        ev = np.asarray(evaders, float)[bad]
        for k in range(means.shape[0]):
            z0[k] = geometry.ez_batch(means[k:k + 1], EvaderState(*ev[k]))[0]
        p = np.asarray(p, dtype=float)
        p[bad] = (z0 <= 0.0).astype(float)
        mu = np.where(bad, np.nan, mu)
        var = np.where(bad, np.nan, var)
    return p, mu, var


def mc_cspez_batch(means, covs, evaders, n, rng_stream, chunk=100):
    """Monte Carlo probabilities for N configurations, chunked for memory.

    Each configuration gets its own substream of ``rng_stream``, so results
    do not depend on chunking.
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    evaders = np.asarray(evaders, dtype=float)
    total = means.shape[0]
    out = np.empty(total)
    substreams = rng_stream.split(total)
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        m = hi - lo
        # One (m, n, 6) draw per chunk: factor each covariance once.
        z = np.empty((m, n, 6))
        for k in range(m):
            g = substreams[lo + k].generator()
            w, v = np.linalg.eigh(covs[lo + k])
            factor = v * np.sqrt(np.clip(w, 0.0, None))
            z[k] = means[lo + k] + g.standard_normal((n, 6)) @ factor.T
        z[:, :, 3:] = np.maximum(z[:, :, 3:], PARAM_FLOOR)
        flat = z.reshape(m * n, 6)
        ex = np.repeat(evaders[lo:hi, 0], n)
        ey = np.repeat(evaders[lo:hi, 1], n)
        epsi = np.repeat(evaders[lo:hi, 2], n)
        ev = np.repeat(evaders[lo:hi, 3], n)
        zz = geometry.ez_core(ex, ey, epsi, ev, flat[:, 0], flat[:, 1],
                              flat[:, 2], flat[:, 3], flat[:, 4], flat[:, 5])
        out[lo:hi] = (zz.reshape(m, n) <= 0.0).mean(axis=1)
    return out
