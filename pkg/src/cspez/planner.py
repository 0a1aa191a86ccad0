"""Minimum-time chance-constrained trajectory optimization.

Decision variables are the B-spline control points and the final time; knots
are recomputed from the final time each evaluation.  Because the knot grid is
uniform, basis values at fixed time fractions are independent of the final
time, so spline quantities and their Jacobians reduce to constant basis
matrices with simple final-time scalings.  Engagement-probability constraint
gradients flow through the evader state via nested dual numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import geometry
from .belief import PursuerBelief
from .bspline import SplineTrajectory, basis_matrix, basis_matrix_d, knot_vector
from .dual import _ERF_A, _ERF_P, Dual, erf_approx, value
from .estimators import mc_cspez_batch
from .features import build_features
from .geometry import EvaderState
from .mlp import forward as mlp_forward, input_gradient
from .solver import NlpResult, solve_auglag

# Standard deviations of z below this behave as deterministic; the CDF
# degenerates to an indicator with zero gradient.
_SIGMA_FLOOR = 1e-12

# Relative half-width of the speed band replacing the strict equality
# ||p'(t)|| = v_E.  Polynomial curves have exactly constant speed only when
# straight, so a low-control-point spline that bends carries an irreducible
# speed ripple (about 3e-3 relative for 8 cubic control points over this
# scenario's turns); the band must sit above that or the program is
# infeasible.  The final-time bias this admits is below the band width.
_SPEED_BAND = 5e-3


@dataclass(frozen=True)
class OperatingRegion:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, p, tol=0.0):
        return (self.x_min - tol <= p[0] <= self.x_max + tol
                and self.y_min - tol <= p[1] <= self.y_max + tol)


@dataclass(frozen=True)
class PlanProblem:
    start: tuple
    goal: tuple
    v_e: float
    u_lb: float
    u_ub: float
    kappa_ub: float
    region: OperatingRegion
    belief: PursuerBelief
    method: str                      # "linear" | "quadratic" | "nn"
    epsilon: float
    model: object = None             # required for method == "nn"
    n_ctrl: int = 8
    degree: int = 3
    n_samples: int = 100
    solver_tol: float = 1e-6
    max_outer: int = 60

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if not self.u_lb < self.u_ub:
            raise ValueError("need u_lb < u_ub")
        if self.kappa_ub <= 0:
            raise ValueError("curvature bound must be positive")
        if self.method not in ("linear", "quadratic", "nn"):
            raise ValueError(
                "planning supports linear, quadratic, or nn constraints "
                "(the Monte Carlo estimator has no usable gradient)")
        if self.method == "nn" and self.model is None:
            raise ValueError("nn method requires a trained model")
        for p in (self.start, self.goal):
            if not self.region.contains(p):
                raise ValueError("start and goal must lie inside the region")


@dataclass
class PlanResult:
    trajectory: SplineTrajectory
    t_f: float
    status: str
    outer_iterations: int
    inner_evaluations: int
    kkt_residual: float
    max_violation: float          # recomputed post hoc, not solver internals
    cspez_values: np.ndarray      # per constraint sample, planning estimate
    wall_time: float


@dataclass
class ValidationReport:
    max_mc_probability: float
    mc_probabilities: np.ndarray
    max_speed_error: float
    max_turn_rate_violation: float
    max_curvature_violation: float
    max_region_violation: float
    endpoint_error: float


# -- engagement probability and its evader-state gradient --------------------


# Nested duals here carry one epsilon slot per differentiation level, with
# the six parameter directions (and three evader directions) stacked along
# leading array axes rather than spread over separate epsilon components.
# This turns the O(6*6) component loops into broadcast numpy ops.


def _theta_seed(i, shape):
    s = np.zeros(shape)
    s[tuple(i if n == 6 else 0 for n in shape)] = 1.0
    return s


def _e_seed(k):
    s = np.zeros((3, 1))
    s[k, 0] = 1.0
    return s


def _inputs_2level(mean, ex, ey, psi):
    """Duals over axes (theta 6, e 3, S) for first-order-in-theta work."""
    zero = Dual(0.0, [0.0])
    theta = [Dual(Dual(float(mean[i]), [0.0]),
                  [Dual(_theta_seed(i, (6, 1, 1)), [0.0])])
             for i in range(6)]
    evs = [Dual(Dual(arr, [_e_seed(k)]), [zero])
           for k, arr in enumerate((ex, ey, psi))]
    return theta, evs


def _inputs_3level(mean, ex, ey, psi):
    """Duals over axes (theta 6, theta 6, e 3, S) for Hessian-in-theta work."""
    leaf0 = Dual(0.0, [0.0])
    mid0 = Dual(leaf0, [leaf0])
    theta = []
    for i in range(6):
        mid = Dual(Dual(float(mean[i]), [0.0]),
                   [Dual(_theta_seed(i, (1, 6, 1, 1)), [0.0])])
        outer_eps = Dual(Dual(_theta_seed(i, (6, 1, 1, 1)), [0.0]), [leaf0])
        theta.append(Dual(mid, [outer_eps]))
    evs = [Dual(Dual(Dual(arr, [_e_seed(k)]), [leaf0]), [mid0])
           for k, arr in enumerate((ex, ey, psi))]
    return theta, evs


def _as_arrays(x, shape):
    return np.broadcast_to(np.asarray(value(x), dtype=float), shape)


def _erf_approx_d(x):
    """Exact derivative of the rational erf approximation (even in x)."""
    ax = np.abs(np.asarray(x, dtype=float))
    t = 1.0 / (1.0 + _ERF_P * ax)
    a0, a1, a2, a3, a4 = _ERF_A
    poly = t * (a0 + t * (a1 + t * (a2 + t * (a3 + t * a4))))
    dpoly = a0 + t * (2 * a1 + t * (3 * a2 + t * (4 * a3 + t * 5 * a4)))
    return np.exp(-ax * ax) * (_ERF_P * t * t * dpoly + 2.0 * ax * poly)


def _cdf_and_grad(mu, var, dmu, dvar):
    """P = F(0; mu, var) and dP/de through both moments; (3, S) gradient.

    The CDF slope comes from differentiating the same erf approximation the
    probability uses, so the constraint gradient is exactly consistent with
    the constraint value (the optimizer cares about this, not about matching
    the true Gaussian density).
    """
    sigma = np.sqrt(np.maximum(var, 0.0))
    small = sigma <= _SIGMA_FLOOR
    sig_safe = np.where(small, 1.0, sigma)
    m = -mu / sig_safe
    y = m / math.sqrt(2.0)
    p = 0.5 * (1.0 + erf_approx(y))
    pdf = 0.5 * _erf_approx_d(y) / math.sqrt(2.0)
    dsig = dvar / (2.0 * sig_safe)
    dm = (-dmu * sig_safe + mu * dsig) / (sig_safe * sig_safe)
    grad = pdf * dm
    p = np.where(small, (mu <= 0.0).astype(float), p)
    grad = np.where(small, 0.0, grad)
    bad = ~np.isfinite(p[None] * grad).all(axis=0) | ~np.isfinite(p)
    if np.any(bad):
        # Discontinuity fallback: deterministic indicator, zero gradient.
        p = np.where(bad, (np.where(np.isfinite(mu), mu, 1.0) <= 0).astype(float), p)
        grad = np.where(bad, 0.0, grad)
    return p, grad


def _cspez_with_egrad(problem: PlanProblem, ex, ey, psi):
    """Probability at each sample point and its gradient w.r.t. (x, y, psi).

    Returns (p (S,), grad (3, S)).
    """
    b = problem.belief
    shape = ex.shape
    if problem.method == "nn":
        feats = np.empty((shape[0], 14))
        base = build_features(b, EvaderState(0.0, 0.0, 0.0, problem.v_e))
        feats[:] = base
        feats[:, 10] = ex - b.mean[0]
        feats[:, 11] = ey - b.mean[1]
        feats[:, 12] = psi - b.mean[2]
        p = mlp_forward(problem.model, feats)
        p = np.atleast_1d(p)
        g = input_gradient(problem.model, feats)
        g = np.atleast_2d(g)
        return p, g[:, 10:13].T.copy()

    mean = b.mean
    cov = b.cov
    if problem.method == "linear":
        theta, (exd, eyd, psid) = _inputs_2level(mean, ex, ey, psi)
        r = geometry.ez_core(exd, eyd, psid, problem.v_e, *theta)
        z0 = _as_arrays(r.val.val, shape)
        dz_de = _as_arrays(r.val.eps[0], (3,) + shape)
        grad = _as_arrays(r.eps[0].val, (6, 1) + shape)[:, 0]
        djac = _as_arrays(r.eps[0].eps[0], (6, 3) + shape)
        mu = z0
        dmu = dz_de
        var = np.einsum("is,ij,js->s", grad, cov, grad)
        dvar = 2.0 * np.einsum("is,ij,jks->ks", grad, cov, djac)
        return _cdf_and_grad(mu, var, dmu, dvar)

    # quadratic: three dual levels give the Hessian and its evader gradient.
    theta, (exd, eyd, psid) = _inputs_3level(mean, ex, ey, psi)
    r = geometry.ez_core(exd, eyd, psid, problem.v_e, *theta)
    z0 = _as_arrays(r.val.val.val, shape)
    dz_de = _as_arrays(r.val.val.eps[0], (3,) + shape)
    grad = _as_arrays(r.val.eps[0].val, (1, 6, 1) + shape)[0, :, 0]
    djac = _as_arrays(r.val.eps[0].eps[0], (1, 6, 3) + shape)[0]
    hess = _as_arrays(r.eps[0].eps[0].val, (6, 6, 1) + shape)[:, :, 0]
    dhess = _as_arrays(r.eps[0].eps[0].eps[0], (6, 6, 3) + shape)
    hess = 0.5 * (hess + hess.transpose(1, 0, 2))
    dhess = 0.5 * (dhess + dhess.transpose(1, 0, 2, 3))
    hs = np.einsum("ijs,jk->iks", hess, cov)
    mu = z0 + 0.5 * np.einsum("iis->s", hs)
    dmu = dz_de + 0.5 * np.einsum("ijks,ji->ks", dhess, cov)
    var = (np.einsum("is,ij,js->s", grad, cov, grad)
           + 0.5 * np.einsum("ijs,jis->s", hs, hs))
    dvar = (2.0 * np.einsum("is,ij,jks->ks", grad, cov, djac)
            + np.einsum("ijks,jl,lms,mi->ks", dhess, cov, hess, cov))
    return _cdf_and_grad(mu, np.maximum(var, 0.0), dmu, dvar)


# -- problem assembly --------------------------------------------------------


def _unit_bases(problem: PlanProblem):
    n_internal = problem.n_ctrl - problem.degree
    knots = knot_vector(0.0, 1.0, problem.degree, n_internal)
    s = np.linspace(0.0, 1.0, problem.n_samples + 1)
    a0 = basis_matrix(knots, problem.degree, s)
    a1 = basis_matrix_d(knots, problem.degree, s, 1)
    a2 = basis_matrix_d(knots, problem.degree, s, 2)
    return a0, a1, a2


def _initial_guess(problem: PlanProblem):
    e0 = np.asarray(problem.start, dtype=float)
    ef = np.asarray(problem.goal, dtype=float)
    frac = np.linspace(0.0, 1.0, problem.n_ctrl)[:, None]
    ctrl = e0 + frac * (ef - e0)
    dist = float(np.linalg.norm(ef - e0))
    tf = 1.3 * dist / problem.v_e
    return np.concatenate([ctrl[:, 0], ctrl[:, 1], [tf]])


def _make_eval(problem: PlanProblem):
    a0, a1, a2 = _unit_bases(problem)
    s_count = a0.shape[0]
    nc = problem.n_ctrl
    n = 2 * nc + 1
    e0 = np.asarray(problem.start, dtype=float)
    ef = np.asarray(problem.goal, dtype=float)
    reg = problem.region
    v_ref = problem.v_e
    v_floor = 1e-6 * v_ref

    def eval_all(x):
        cx, cy, tf = x[:nc], x[nc:2 * nc], x[-1]
        px = a0 @ cx
        py = a0 @ cy
        pdx = (a1 @ cx) / tf
        pdy = (a1 @ cy) / tf
        pddx = (a2 @ cx) / tf ** 2
        pddy = (a2 @ cy) / tf ** 2
        v = np.hypot(pdx, pdy)
        vs = np.maximum(v, v_floor)
        cr = pdx * pddy - pdy * pddx
        u = cr / vs ** 2
        kap = u / vs
        psi = np.arctan2(pdy, pdx)

        # Speed partials.
        dv_dcx = (pdx[:, None] * a1) / (tf * vs[:, None])
        dv_dcy = (pdy[:, None] * a1) / (tf * vs[:, None])
        dv_dtf = -v / tf
        # Turn-rate partials.
        dcr_dcx = (a1 / tf) * pddy[:, None] - pdy[:, None] * (a2 / tf ** 2)
        dcr_dcy = pdx[:, None] * (a2 / tf ** 2) - (a1 / tf) * pddx[:, None]
        du_dcx = dcr_dcx / vs[:, None] ** 2 - (2 * u / vs)[:, None] * dv_dcx
        du_dcy = dcr_dcy / vs[:, None] ** 2 - (2 * u / vs)[:, None] * dv_dcy
        du_dtf = -u / tf
        # Curvature partials.
        dk_dcx = du_dcx / vs[:, None] - (u / vs ** 2)[:, None] * dv_dcx
        dk_dcy = du_dcy / vs[:, None] - (u / vs ** 2)[:, None] * dv_dcy
        dk_dtf = np.zeros(s_count)
        # Heading partials.
        dpsi_dcx = -(pdy / (tf * vs ** 2))[:, None] * a1
        dpsi_dcy = (pdx / (tf * vs ** 2))[:, None] * a1
        # Engagement probability and chain rule through (x, y, psi).
        p, pe = _cspez_with_egrad(problem, px, py, psi)
        dp = np.zeros((s_count, n))
        dp[:, :nc] = pe[0][:, None] * a0 + pe[2][:, None] * dpsi_dcx
        dp[:, nc:2 * nc] = pe[1][:, None] * a0 + pe[2][:, None] * dpsi_dcy
        # psi and p(x, y) carry no direct final-time dependence.

        # Equalities: endpoint pinning only (the basis is unclamped).
        ceq = np.array([px[0] - e0[0], py[0] - e0[1],
                        px[-1] - ef[0], py[-1] - ef[1]])
        jeq = np.zeros((4, n))
        jeq[0, :nc] = a0[0]
        jeq[1, nc:2 * nc] = a0[0]
        jeq[2, :nc] = a0[-1]
        jeq[3, nc:2 * nc] = a0[-1]

        rows = []
        jrows = []

        def add(vals, jcx, jcy, jtf):
            rows.append(vals)
            j = np.zeros((s_count, n))
            if jcx is not None:
                j[:, :nc] = jcx
            if jcy is not None:
                j[:, nc:2 * nc] = jcy
            if jtf is not None:
                j[:, -1] = jtf
            jrows.append(j)

        band = _SPEED_BAND * v_ref
        add(v - (v_ref + band), dv_dcx, dv_dcy, dv_dtf)
        add((v_ref - band) - v, -dv_dcx, -dv_dcy, -dv_dtf)
        add(reg.x_min - px, -a0, None, None)
        add(px - reg.x_max, a0, None, None)
        add(reg.y_min - py, None, -a0, None)
        add(py - reg.y_max, None, a0, None)
        add(problem.u_lb - u, -du_dcx, -du_dcy, -du_dtf)
        add(u - problem.u_ub, du_dcx, du_dcy, du_dtf)
        add(-problem.kappa_ub - kap, -dk_dcx, -dk_dcy, -dk_dtf)
        add(kap - problem.kappa_ub, dk_dcx, dk_dcy, dk_dtf)
        rows.append(p - problem.epsilon)
        jrows.append(dp)

        ci = np.concatenate(rows)
        ji = np.vstack(jrows)
        grad_f = np.zeros(n)
        grad_f[-1] = 1.0
        return tf, grad_f, ceq, jeq, ci, ji

    return eval_all


def plan(problem: PlanProblem) -> PlanResult:
    start_time = time.perf_counter()
    eval_all = _make_eval(problem)
    x0 = _initial_guess(problem)
    bounds = [(None, None)] * (2 * problem.n_ctrl) + [(1e-3, None)]
    res: NlpResult = solve_auglag(eval_all, x0, bounds=bounds,
                                  tol=problem.solver_tol,
                                  feas_tol=problem.solver_tol,
                                  max_outer=problem.max_outer)
    nc = problem.n_ctrl
    ctrl = np.stack([res.x[:nc], res.x[nc:2 * nc]], axis=1)
    tf = float(res.x[-1])
    traj = SplineTrajectory(ctrl, problem.degree, 0.0, tf)
    # Recompute feasibility from scratch rather than trusting the solver.
    _, _, ceq, _, ci, _ = eval_all(res.x)
    max_violation = max(np.abs(ceq).max(), max(0.0, ci.max()))
    s_count = problem.n_samples + 1
    p_vals = ci[-s_count:] + problem.epsilon
    return PlanResult(trajectory=traj, t_f=tf, status=res.status,
                      outer_iterations=res.outer_iterations,
                      inner_evaluations=res.inner_evaluations,
                      kkt_residual=res.kkt_residual,
                      max_violation=float(max_violation),
                      cspez_values=p_vals,
                      wall_time=time.perf_counter() - start_time)


def validate(problem: PlanProblem, result: PlanResult, mc_n: int,
             rng_stream, oversample: int = 4) -> ValidationReport:
    """Post-hoc check at finer sampling with the Monte Carlo estimator."""
    traj = result.trajectory
    t = np.linspace(traj.t0, traj.tf, oversample * problem.n_samples + 1)
    p = traj.eval(t)
    d1 = traj.eval_d1(t)
    d2 = traj.eval_d2(t)
    v = np.hypot(d1[:, 0], d1[:, 1])
    u = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / v ** 2
    kap = u / v
    psi = np.arctan2(d1[:, 1], d1[:, 0])
    m = t.shape[0]
    means = np.tile(problem.belief.mean, (m, 1))
    covs = np.tile(problem.belief.cov, (m, 1, 1))
    evaders = np.stack([p[:, 0], p[:, 1], psi,
                        np.full(m, problem.v_e)], axis=1)
    probs = mc_cspez_batch(means, covs, evaders, mc_n, rng_stream)
    reg = problem.region
    region_viol = np.maximum.reduce([
        reg.x_min - p[:, 0], p[:, 0] - reg.x_max,
        reg.y_min - p[:, 1], p[:, 1] - reg.y_max])
    endpoint = max(np.linalg.norm(p[0] - problem.start),
                   np.linalg.norm(p[-1] - problem.goal))
    return ValidationReport(
        max_mc_probability=float(probs.max()),
        mc_probabilities=probs,
        max_speed_error=float(np.abs(v - problem.v_e).max()),
        max_turn_rate_violation=float(max(0.0, (u - problem.u_ub).max(),
                                          (problem.u_lb - u).max())),
        max_curvature_violation=float(max(0.0,
                                          (np.abs(kap) - problem.kappa_ub).max())),
        max_region_violation=float(max(0.0, region_viol.max())),
        endpoint_error=float(endpoint),
    )
