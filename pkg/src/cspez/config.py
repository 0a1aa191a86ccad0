"""Scenario configuration: one TOML or JSON file driving every subcommand.

Parsing is strict: unknown keys anywhere in the document are rejected so a
typo cannot silently fall back to a default.  Every numeric default below is
the example-scenario value; seeds and sample counts are explicit so a config
file is a complete record of a run.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .belief import PursuerBelief
from .features import FeatureRanges
from .training import Hyper


class ConfigError(ValueError):
    """Malformed, unknown, or inconsistent configuration content."""


def _check_keys(obj: dict, allowed, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a table/object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def _dataclass_from(cls, obj: dict, where: str):
    names = [f.name for f in fields(cls)]
    _check_keys(obj, names, where)
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


@dataclass(frozen=True)
class EvaderConfig:
    heading: float = 0.0
    speed: float = 1.0

    def __post_init__(self):
        if self.speed <= 0:
            raise ConfigError("evader speed must be positive")


@dataclass(frozen=True)
class GridConfig:
    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = -4.0
    y_max: float = 4.0
    nx: int = 101
    ny: int = 101

    def __post_init__(self):
        if self.nx < 0 or self.ny < 0:
            raise ConfigError("grid counts must be nonnegative")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigError("grid extents must be increasing")


@dataclass(frozen=True)
class PlannerConfig:
    start: tuple = (-4.0, -4.0)
    goal: tuple = (4.0, 4.0)
    u_lb: float = -1.0
    u_ub: float = 1.0
    kappa_ub: float = 0.2
    region: tuple = (-10.0, 10.0, -10.0, 10.0)  # x_min, x_max, y_min, y_max
    method: str = "linear"
    epsilon: float = 0.05
    n_ctrl: int = 8
    degree: int = 3
    n_samples: int = 100
    solver_tol: float = 1e-6
    max_outer: int = 60
    validate_mc_n: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        object.__setattr__(self, "region",
                           tuple(float(v) for v in self.region))
        if len(self.start) != 2 or len(self.goal) != 2:
            raise ConfigError("start/goal must be 2-vectors")
        if len(self.region) != 4:
            raise ConfigError("region must be (x_min, x_max, y_min, y_max)")


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = (0.01, 0.05, 0.25, 0.5)
    mc_n: int = 10_000
    n_configs: int = 20_000
    bins: int = 20

    def __post_init__(self):
        object.__setattr__(self, "thresholds",
                           tuple(float(t) for t in self.thresholds))
        if self.mc_n < 1 or self.n_configs < 1:
            raise ConfigError("sample counts must be positive")


@dataclass(frozen=True)
class TrainingConfig:
    n_samples: int = 50_000
    mc_n: int = 10_000
    hyper: Hyper = field(default_factory=Hyper)
    ranges: FeatureRanges = field(default_factory=FeatureRanges)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    workers: int = 1
    model_path: str = None
    belief: PursuerBelief = None
    evader: EvaderConfig = field(default_factory=EvaderConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if self.belief is None:
            object.__setattr__(self, "belief", _default_belief())


def _default_belief() -> PursuerBelief:
    return PursuerBelief.from_blocks(
        [0.0, 0.0, np.pi / 4, 0.2, 1.0, 2.0],
        [[0.025, 0.04], [0.04, 0.1]], 0.2, 0.005, 0.1, 0.3)


_TOP_KEYS = ("seed", "workers", "model_path", "belief", "evader", "grid",
             "planner", "eval", "training")


def config_from_dict(obj: dict) -> ScenarioConfig:
    _check_keys(obj, _TOP_KEYS, "config")
    kwargs = {}
    for key in ("seed", "workers", "model_path"):
        if key in obj:
            kwargs[key] = obj[key]
    if "belief" in obj:
        try:
            kwargs["belief"] = PursuerBelief.from_dict(obj["belief"])
        except ValueError as exc:
            raise ConfigError(f"bad belief: {exc}") from exc
    if "evader" in obj:
        kwargs["evader"] = _dataclass_from(EvaderConfig, obj["evader"],
                                           "evader")
    if "grid" in obj:
        kwargs["grid"] = _dataclass_from(GridConfig, obj["grid"], "grid")
    if "planner" in obj:
        kwargs["planner"] = _dataclass_from(PlannerConfig, obj["planner"],
                                            "planner")
    if "eval" in obj:
        kwargs["eval"] = _dataclass_from(EvalConfig, obj["eval"], "eval")
    if "training" in obj:
        t = dict(obj["training"])
        _check_keys(t, [f.name for f in fields(TrainingConfig)], "training")
        if "hyper" in t:
            t["hyper"] = _dataclass_from(Hyper, t["hyper"], "training.hyper")
        if "ranges" in t:
            r = t["ranges"]
            _check_keys(r, ("lo", "hi"), "training.ranges")
            try:
                t["ranges"] = FeatureRanges.from_dict(r)
            except ValueError as exc:
                raise ConfigError(f"bad training.ranges: {exc}") from exc
        try:
            kwargs["training"] = TrainingConfig(**t)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad training: {exc}") from exc
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        try:
            obj = json.loads(raw.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        try:
            obj = tomllib.loads(raw.decode())
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(obj)
