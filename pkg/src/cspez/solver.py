"""Augmented-Lagrangian solver for small dense nonlinear programs.

Classic PHR scheme: inner minimization of the augmented Lagrangian with
L-BFGS-B (which also handles simple variable bounds), first-order multiplier
updates, and penalty growth when feasibility stalls.  The contract checked by
callers is the KKT residual and constraint violation at the returned point,
not the path taken to get there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass
class NlpResult:
    x: np.ndarray
    status: str                  # "success" | "max_iterations"
    outer_iterations: int
    inner_evaluations: int
    kkt_residual: float
    max_violation: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray


_MUL_MAX = 1e8   # safeguard box for multiplier estimates


def solve_auglag(eval_all, x0, bounds=None, tol=1e-6, feas_tol=1e-6,
                 max_outer=60, max_inner=500, penalty0=10.0,
                 penalty_growth=10.0, penalty_max=1e5,
                 polish_penalty=1e4):
    """Minimize f(x) subject to ceq(x) = 0 and cineq(x) <= 0.

    ``eval_all(x)`` returns (f, g, ceq, Jeq, ci, Ji) with dense Jacobians.
    Safeguarded first-order multiplier updates run every outer iteration;
    the penalty grows only while the violation stalls.  Once feasible, the
    penalty drops to ``polish_penalty``: the reported KKT stationarity equals
    the inner solver's achieved projected gradient, and L-BFGS-B can only
    certify tight gradients when the penalty curvature does not push the
    needed function decrease below double-precision resolution.
    """
    x = np.asarray(x0, dtype=float).copy()
    evals = [0]

    def cached_eval(xv):
        evals[0] += 1
        return eval_all(xv)

    _, _, ceq, _, ci, _ = cached_eval(x)
    lam = np.zeros(len(ceq))
    sig = np.zeros(len(ci))
    rho = penalty0
    omega = 1e-2                      # inner projected-gradient tolerance
    prev_viol = np.inf
    polish = False
    status = "max_iterations"
    outer_done = 0
    kkt = np.inf
    viol = np.inf

    def al_value_grad(xv):
        f, g, ceq, Jeq, ci, Ji = cached_eval(xv)
        val = f
        grad = g.copy()
        if len(ceq):
            val += lam @ ceq + 0.5 * rho * ceq @ ceq
            grad += Jeq.T @ (lam + rho * ceq)
        if len(ci):
            act = np.maximum(0.0, sig + rho * ci)
            val += (act @ act - sig @ sig) / (2.0 * rho)
            grad += Ji.T @ act
        if not np.isfinite(val):
            return 1e30, np.zeros_like(grad)
        return val, grad

    for outer in range(max_outer):
        outer_done = outer + 1
        res = minimize(al_value_grad, x, jac=True, method="L-BFGS-B",
                       bounds=bounds,
                       options={"maxiter": max_inner, "gtol": omega,
                                "ftol": 1e-16, "maxcor": 20, "maxls": 40})
        x = res.x
        _, g, ceq, Jeq, ci, Ji = cached_eval(x)
        viol = 0.0
        if len(ceq):
            viol = max(viol, np.abs(ceq).max())
        if len(ci):
            viol = max(viol, max(0.0, ci.max()))
        # First-order updates; these equal the AL gradient multipliers at the
        # inner solution, so the KKT residual below matches what L-BFGS-B saw.
        lam_new = np.clip(lam + rho * ceq, -_MUL_MAX, _MUL_MAX)
        sig_new = np.clip(np.maximum(0.0, sig + rho * ci), 0.0, _MUL_MAX)
        r = g.copy()
        if len(ceq):
            r += Jeq.T @ lam_new
        if len(ci):
            r += Ji.T @ sig_new
        if bounds is not None:
            for i, (lo, hi) in enumerate(bounds):
                if lo is not None and x[i] <= lo + 1e-12 and r[i] > 0:
                    r[i] = 0.0
                if hi is not None and x[i] >= hi - 1e-12 and r[i] < 0:
                    r[i] = 0.0
        comp = np.abs(sig_new * ci).max() if len(ci) else 0.0
        kkt = max(np.abs(r).max(), comp)
        if kkt <= tol and viol <= feas_tol:
            lam, sig = lam_new, sig_new
            status = "success"
            break
        lam, sig = lam_new, sig_new
        if not polish and viol <= feas_tol:
            polish = True
            rho = min(rho, polish_penalty)
        if polish:
            omega = tol * 0.3
        else:
            omega = max(omega * 0.2, tol * 0.3)
            if viol > 0.7 * prev_viol and viol > feas_tol:
                rho = min(rho * penalty_growth, penalty_max)
        prev_viol = viol

    return NlpResult(x=x, status=status, outer_iterations=outer_done,
                     inner_evaluations=evals[0], kkt_residual=float(kkt),
                     max_violation=float(viol), eq_multipliers=lam,
                     ineq_multipliers=sig)
