"""Curve-straight intercept geometry and the deterministic engagement function.

The pursuer flies one constant-radius arc (left or right) followed by a
straight segment tangent to the turn circle, intercepting the evader's
projected position.  ``ez_value`` is negative exactly when the shortest such
path is within the pursuer's range.

The core is written branch-free (``where``-style selects) over a generic
scalar type, so the same code runs on plain floats, numpy batches of sampled
parameters, and dual numbers for derivatives.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import dual
from .dual import value, where

TWO_PI = 2.0 * math.pi

# Sampled physical parameters are floored here so that Gaussian tails with
# nonpositive radius/range/speed still evaluate to a finite, sensible z.
PARAM_FLOOR = 1e-9

# Arc angles this close below zero are roundoff at exact collinearity and are
# snapped to zero rather than wrapped to a full loop.
ARC_SNAP = 1e-9


class DegenerateGeometryError(ValueError):
    """No curve-straight tangent path exists on either side."""


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class PursuerParams:
    """Deterministic pursuer sample: position, heading, turn radius, range, speed."""

    x: float
    y: float
    heading: float
    turn_radius: float
    range: float
    speed: float

    def __post_init__(self):
        vals = (self.x, self.y, self.heading,
                self.turn_radius, self.range, self.speed)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("pursuer parameters must be finite")
        if self.turn_radius <= 0 or self.range <= 0 or self.speed <= 0:
            raise ValueError("turn radius, range, and speed must be positive")

    @classmethod
    def from_vector(cls, theta):
        return cls(*[float(v) for v in theta])

    def as_vector(self):
        return np.array([self.x, self.y, self.heading,
                         self.turn_radius, self.range, self.speed])


@dataclass(frozen=True)
class EvaderState:
    x: float
    y: float
    heading: float
    speed: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in
                   (self.x, self.y, self.heading, self.speed)):
            raise ValueError("evader state must be finite")
        if self.speed < 0:
            raise ValueError("evader speed must be nonnegative")


@dataclass(frozen=True)
class CsPath:
    """One-sided curve-straight path: arc sweep, tangent point, total length."""

    side: Side
    arc_angle: float
    tangent_point: tuple[float, float]
    length: float


def project_evader(e: EvaderState, range_: float, pursuer_speed: float):
    """Position the evader reaches while the pursuer exhausts its range."""
    if pursuer_speed <= 0:
        raise ValueError("pursuer speed must be positive")
    if not math.isfinite(range_):
        raise ValueError("range must be finite")
    nu = e.speed / pursuer_speed
    return (e.x + nu * range_ * math.cos(e.heading),
            e.y + nu * range_ * math.sin(e.heading))


def turn_center(p: PursuerParams, side: Side):
    s = 1.0 if side is Side.LEFT else -1.0
    return (p.x - s * p.turn_radius * math.sin(p.heading),
            p.y + s * p.turn_radius * math.cos(p.heading))


# -- generic branch-free core ------------------------------------------------


def _side_length(fx, fy, px, py, psi, a, sign):
    """Arc-plus-tangent length for one turn direction (+1 left, -1 right).

    Returns (length, inside, gx, gy, theta); entries of ``inside`` mark lanes
    where the intercept point lies strictly inside the turn circle and the
    other outputs are meaningless there.
    """
    sp = dual.sin(psi)
    cp = dual.cos(psi)
    cx = px - sign * a * sp
    cy = py + sign * a * cp
    v1x = fx - cx
    v1y = fy - cy
    d2 = v1x * v1x + v1y * v1y
    a2 = a * a
    inside = value(d2) < value(a2)
    # Invalid lanes get a harmless placeholder distance so sqrt stays smooth;
    # their outputs are discarded by the caller.
    d2s = where(inside, 4.0 * a2, d2)
    alpha = a2 / d2s
    rad = a2 * (1.0 - alpha)
    rad = where(value(rad) < 0.0, 0.0 * rad, rad)  # roundoff at tangency
    beta = dual.sqrt(rad)
    n1 = dual.sqrt(d2s)
    # Unit perpendicular to v1: clockwise rotation for a left turn, counter-
    # clockwise for a right turn, so the tangent point lands on the exit side.
    ppx = sign * v1y / n1
    ppy = -sign * v1x / n1
    v3x = alpha * v1x + beta * ppx
    v3y = alpha * v1y + beta * ppy
    v4x = px - cx
    v4y = py - cy
    cross = v4x * v3y - v4y * v3x
    dot = v4x * v3x + v4y * v3y
    theta = dual.atan2(sign * cross, dot)
    tv = value(theta)
    theta = where(tv < -ARC_SNAP, theta + TWO_PI,
                  where(tv < 0.0, 0.0 * theta, theta))
    gx = cx + v3x
    gy = cy + v3y
    seg = dual.hypot(fx - gx, fy - gy)
    return a * theta + seg, inside, gx, gy, theta


def cs_length_core(fx, fy, px, py, psi, a):
    """Shortest curve-straight length over both sides, branch-free.

    Lanes where the target is inside one circle take the other side; inside
    both (only near the pursuer itself) the length degenerates to zero, which
    feeds the captured-on-the-spot convention of ``ez_value``.
    """
    left, in_l, *_ = _side_length(fx, fy, px, py, psi, a, 1.0)
    right, in_r, *_ = _side_length(fx, fy, px, py, psi, a, -1.0)
    both = np.logical_and(in_l, in_r)
    shorter = where(value(right) < value(left), right, left)  # tie -> left
    length = where(in_l, right, where(in_r, left, shorter))
    return where(both, 0.0 * length, length), both


def ez_core(ex, ey, psi_e, v_e, px, py, psi_p, a, rng_, v_p):
    """Engagement function z over generic scalars; negative means engaged."""
    nu = v_e / v_p
    fx = ex + nu * rng_ * dual.cos(psi_e)
    fy = ey + nu * rng_ * dual.sin(psi_e)
    length, _ = cs_length_core(fx, fy, px, py, psi_p, a)
    return length - rng_


# -- scalar API --------------------------------------------------------------


def cs_path(f, p: PursuerParams, side: Side):
    """Curve-straight path to point ``f`` for one side, or None if no tangent.

    No tangent exists when ``f`` lies strictly inside that side's turn circle.
    """
    fx, fy = float(f[0]), float(f[1])
    if not (math.isfinite(fx) and math.isfinite(fy)):
        raise ValueError("intercept point must be finite")
    sign = 1.0 if side is Side.LEFT else -1.0
    length, inside, gx, gy, theta = _side_length(
        fx, fy, p.x, p.y, p.heading, p.turn_radius, sign)
    if inside:
        return None
    return CsPath(side=side, arc_angle=float(theta),
                  tangent_point=(float(gx), float(gy)), length=float(length))


def shortest_cs_length(f, p: PursuerParams) -> float:
    left = cs_path(f, p, Side.LEFT)
    right = cs_path(f, p, Side.RIGHT)
    if left is None and right is None:
        raise DegenerateGeometryError(
            "intercept point inside both turn circles")
    if left is None:
        return right.length
    if right is None:
        return left.length
    return right.length if right.length < left.length else left.length


def ez_value(e: EvaderState, p: PursuerParams) -> float:
    f = project_evader(e, p.range, p.speed)
    try:
        return shortest_cs_length(f, p) - p.range
    except DegenerateGeometryError:
        # Projected position essentially on top of the pursuer: captured.
        return -p.range


def ez_value_theta(theta, e: EvaderState):
    """z as a generic function of the 6 pursuer parameters (dual-friendly)."""
    px, py, psi, a, rng_, v_p = theta
    return ez_core(e.x, e.y, e.heading, e.speed, px, py, psi, a, rng_, v_p)


def ez_batch(thetas, e: EvaderState):
    """Vectorized z over rows of pursuer parameters (used by Monte Carlo).

    Nonpositive radius/range/speed draws are floored at PARAM_FLOOR.
    """
    thetas = np.asarray(thetas, dtype=float)
    px, py, psi = thetas[:, 0], thetas[:, 1], thetas[:, 2]
    a = np.maximum(thetas[:, 3], PARAM_FLOOR)
    rng_ = np.maximum(thetas[:, 4], PARAM_FLOOR)
    v_p = np.maximum(thetas[:, 5], PARAM_FLOOR)
    return ez_core(e.x, e.y, e.heading, e.speed, px, py, psi, a, rng_, v_p)
