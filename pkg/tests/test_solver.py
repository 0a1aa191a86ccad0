import math

import numpy as np
import pytest

from cspez.solver import solve_auglag


def qp_eval(x):
    """min (x-2)^2 + (y-1)^2  s.t.  x + y = 1,  x^2 <= 0.5."""
    f = (x[0] - 2) ** 2 + (x[1] - 1) ** 2
    g = np.array([2 * (x[0] - 2), 2 * (x[1] - 1)])
    ceq = np.array([x[0] + x[1] - 1.0])
    jeq = np.array([[1.0, 1.0]])
    ci = np.array([x[0] ** 2 - 0.5])
    ji = np.array([[2 * x[0], 0.0]])
    return f, g, ceq, jeq, ci, ji


def test_equality_and_inequality_toy():
    res = solve_auglag(qp_eval, np.zeros(2), tol=1e-8, feas_tol=1e-8)
    x_star = math.sqrt(0.5)
    assert res.status == "success"
    assert res.x == pytest.approx([x_star, 1 - x_star], abs=1e-6)
    assert res.kkt_residual <= 1e-8
    assert res.max_violation <= 1e-8
    # Independent KKT recheck with the reported multipliers.
    f, g, ceq, jeq, ci, ji = qp_eval(res.x)
    r = g + jeq.T @ res.eq_multipliers + ji.T @ res.ineq_multipliers
    assert np.abs(r).max() <= 1e-7


def test_bounds_only_quadratic():
    def ev(x):
        f = (x[0] + 1) ** 2 + (x[1] - 3) ** 2
        g = np.array([2 * (x[0] + 1), 2 * (x[1] - 3)])
        z = np.zeros(0)
        return f, g, z, np.zeros((0, 2)), z, np.zeros((0, 2))

    res = solve_auglag(ev, np.zeros(2), bounds=[(0.0, None), (None, 2.0)])
    assert res.status == "success"
    assert res.x == pytest.approx([0.0, 2.0], abs=1e-8)


def test_active_set_identification():
    # Minimum of x^2 + y^2 subject to x >= 1 (written as 1 - x <= 0).
    def ev(x):
        f = x[0] ** 2 + x[1] ** 2
        g = 2 * x
        ci = np.array([1.0 - x[0]])
        ji = np.array([[-1.0, 0.0]])
        return f, g, np.zeros(0), np.zeros((0, 2)), ci, ji

    res = solve_auglag(ev, np.array([3.0, 3.0]))
    assert res.status == "success"
    assert res.x == pytest.approx([1.0, 0.0], abs=1e-6)
    assert res.ineq_multipliers[0] == pytest.approx(2.0, rel=1e-4)


def test_inactive_constraint_has_zero_multiplier():
    def ev(x):
        f = (x[0] - 0.2) ** 2
        g = np.array([2 * (x[0] - 0.2)])
        ci = np.array([x[0] - 10.0])
        ji = np.array([[1.0]])
        return f, g, np.zeros(0), np.zeros((0, 1)), ci, ji

    res = solve_auglag(ev, np.array([5.0]))
    assert res.status == "success"
    assert res.x[0] == pytest.approx(0.2, abs=1e-8)
    assert res.ineq_multipliers[0] == 0.0


def test_infeasible_problem_reports_max_iterations():
    # x = 0 and x = 1 cannot both hold.
    def ev(x):
        f = float(x[0] ** 2)
        g = np.array([2 * x[0]])
        ceq = np.array([x[0], x[0] - 1.0])
        jeq = np.array([[1.0], [1.0]])
        return f, g, ceq, jeq, np.zeros(0), np.zeros((0, 1))

    res = solve_auglag(ev, np.array([0.3]), max_outer=8)
    assert res.status == "max_iterations"
    assert res.max_violation > 0.1


def test_rosenbrock_with_ring_constraint():
    def ev(x):
        a, b = 1.0, 100.0
        f = (a - x[0]) ** 2 + b * (x[1] - x[0] ** 2) ** 2
        g = np.array([-2 * (a - x[0]) - 4 * b * x[0] * (x[1] - x[0] ** 2),
                      2 * b * (x[1] - x[0] ** 2)])
        ci = np.array([x[0] ** 2 + x[1] ** 2 - 2.0])
        ji = np.array([[2 * x[0], 2 * x[1]]])
        return f, g, np.zeros(0), np.zeros((0, 2)), ci, ji

    res = solve_auglag(ev, np.array([-1.0, 1.0]))
    assert res.status == "success"
    # The unconstrained optimum (1, 1) satisfies the ring constraint.
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-4)
