"""Uniform unclamped B-spline trajectories with unicycle flatness outputs.

Knots are a uniform grid extended ``degree`` spacings beyond [t0, tf], so the
curve does not interpolate its endpoints; the planner pins endpoints with
equality constraints instead.  The basis count matches the control-point
count via n_internal = n_ctrl - degree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Evaluation time outside [t0, tf]."""


class DegenerateVelocityError(ValueError):
    """Speed too small for turn rate / curvature to be defined."""


def knot_vector(t0: float, tf: float, degree: int, n_internal: int):
    """Uniform grid from t0 - degree*dt to tf + degree*dt."""
    dt = (tf - t0) / n_internal
    return t0 + dt * np.arange(-degree, n_internal + degree + 1)


def basis_matrix(knots, degree: int, t):
    """Cox-de Boor basis values B_{i,degree}(t), shape (len(t), n_basis).

    Intervals are half-open [t_i, t_{i+1}); with the extended uniform grid
    every t in [t0, tf] lies strictly inside the supported region, so no
    endpoint special-casing is needed.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    knots = np.asarray(knots, dtype=float)
    n0 = len(knots) - 1
    b = ((t[:, None] >= knots[None, :-1])
         & (t[:, None] < knots[None, 1:])).astype(float)
    for k in range(1, degree + 1):
        nb = n0 - k
        left = (t[:, None] - knots[None, :nb]) / (knots[k:k + nb] - knots[:nb])
        right = (knots[k + 1:k + 1 + nb] - t[:, None]) / \
                (knots[k + 1:k + 1 + nb] - knots[1:1 + nb])
        b = left * b[:, :nb] + right * b[:, 1:nb + 1]
    return b


def basis_matrix_d(knots, degree: int, t, order: int):
    """Derivative-of-basis matrix of the given order (0, 1, or 2)."""
    if order == 0:
        return basis_matrix(knots, degree, t)
    knots = np.asarray(knots, dtype=float)
    lower = basis_matrix_d(knots, degree - 1, t, order - 1)
    n = len(knots) - degree - 1
    out = np.zeros((lower.shape[0], n))
    denom_a = knots[degree:degree + n] - knots[:n]
    denom_b = knots[degree + 1:degree + 1 + n] - knots[1:1 + n]
    out += degree * lower[:, :n] / denom_a
    out -= degree * lower[:, 1:n + 1] / denom_b
    return out


@dataclass(frozen=True)
class SplineTrajectory:
    control_points: np.ndarray  # (n_ctrl, 2)
    degree: int
    t0: float
    tf: float
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        if cp.ndim != 2 or cp.shape[1] != 2:
            raise ValueError("control points must be (n, 2)")
        if cp.shape[0] <= self.degree:
            raise ValueError("need more control points than the degree")
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "knots", knot_vector(
            self.t0, self.tf, self.degree, self.n_internal))

    @property
    def n_internal(self) -> int:
        return self.control_points.shape[0] - self.degree

    def _check_domain(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0) or np.any(t > self.tf):
            raise DomainError(f"t outside [{self.t0}, {self.tf}]")

    def eval(self, t):
        self._check_domain(t)
        out = basis_matrix(self.knots, self.degree, t) @ self.control_points
        return out[0] if np.ndim(t) == 0 else out

    def eval_d1(self, t):
        self._check_domain(t)
        out = basis_matrix_d(self.knots, self.degree, t, 1) @ self.control_points
        return out[0] if np.ndim(t) == 0 else out

    def eval_d2(self, t):
        self._check_domain(t)
        out = basis_matrix_d(self.knots, self.degree, t, 2) @ self.control_points
        return out[0] if np.ndim(t) == 0 else out

    def to_json(self) -> str:
        return json.dumps({
            "degree": self.degree,
            "t0": self.t0,
            "tf": self.tf,
            "n_internal_knots": self.n_internal,
            "control_points": self.control_points.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "SplineTrajectory":
        obj = json.loads(text)
        s = cls(np.asarray(obj["control_points"], dtype=float),
                int(obj["degree"]), float(obj["t0"]), float(obj["tf"]))
        if s.n_internal != int(obj["n_internal_knots"]):
            raise ValueError("inconsistent internal knot count")
        return s


@dataclass(frozen=True)
class FlatOutputs:
    position: tuple
    speed: float
    turn_rate: float
    curvature: float


def flat_outputs(s: SplineTrajectory, t, v_floor: float = 1e-9) -> FlatOutputs:
    """Unicycle flatness outputs: speed, turn rate, signed curvature."""
    p = s.eval(t)
    d1 = s.eval_d1(t)
    d2 = s.eval_d2(t)
    v = float(np.hypot(d1[0], d1[1]))
    if v <= v_floor:
        raise DegenerateVelocityError(f"speed {v} at t={t} below {v_floor}")
    u = float(d1[0] * d2[1] - d1[1] * d2[0]) / v ** 2
    return FlatOutputs(position=(float(p[0]), float(p[1])),
                       speed=v, turn_rate=u, curvature=u / v)
