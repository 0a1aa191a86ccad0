"""Curve-straight engagement zones, probabilistic estimators under Gaussian
pursuer uncertainty, and chance-constrained B-spline trajectory planning."""

from .belief import PursuerBelief, RngStream
from .estimators import (CspezEstimate, linear_cspez, mc_cspez, nn_cspez,
                         quadratic_cspez)
from .geometry import EvaderState, PursuerParams, ez_value
from .planner import OperatingRegion, PlanProblem, PlanResult, plan, validate

__version__ = "0.1.0"

__all__ = [
    "CspezEstimate", "EvaderState", "OperatingRegion", "PlanProblem",
    "PlanResult", "PursuerBelief", "PursuerParams", "RngStream", "ez_value",
    "linear_cspez", "mc_cspez", "nn_cspez", "plan", "quadratic_cspez",
    "validate", "__version__",
]
