"""Command-line entry point tying the modules into reproducible runs.

One scenario config (TOML or JSON) drives every subcommand; flags override
file values.  All randomness flows from the root seed through fixed stream
paths, one per purpose, so reruns with the same config and seed are
byte-identical apart from wall-time fields.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 infeasible plan.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import evaluation as ev
from .belief import RngStream
from .config import ConfigError, ScenarioConfig, load_config
from .estimators import mc_cspez_batch
from .features import generate_labels, latin_hypercube
from .geometry import PARAM_FLOOR, ez_core
from .mlp import ModelError, load_model, save_model
from .planner import (OperatingRegion, PlanProblem, plan, validate)
from .training import TrainingError, train

# Stream paths under the root seed, one per consumer.
_PATH_SAMPLING = (0,)    # Latin hypercube configuration draws
_PATH_LABELS = (1,)      # MC labels / baselines over configurations
_PATH_GRID = (2,)        # MC baseline over level-set grids
_PATH_VALIDATE = (3,)    # MC validation along planned trajectories

_TABLE2_METHODS = ("linear", "quadratic", "nn")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


class _SliceStream:
    """View of a parent stream's substreams [lo, hi).

    Lets parallel workers reproduce exactly the substreams a serial
    ``mc_cspez_batch`` over the full array would have used.
    """

    def __init__(self, parent: RngStream, total: int, lo: int, hi: int):
        self.parent, self.total, self.lo, self.hi = parent, total, lo, hi

    def split(self, n: int):
        if n != self.hi - self.lo:
            raise ValueError("slice stream split size mismatch")
        return self.parent.split(self.total)[self.lo:self.hi]


def _mc_slice(args):
    means, covs, evaders, n, parent, total, lo, hi = args
    return mc_cspez_batch(means[lo:hi], covs[lo:hi], evaders[lo:hi], n,
                          _SliceStream(parent, total, lo, hi))


def mc_batch_parallel(means, covs, evaders, n, stream: RngStream, workers=1):
    """mc_cspez_batch with optional workers; results independent of workers."""
    total = means.shape[0]
    if workers <= 1 or total < 2 * workers:
        return mc_cspez_batch(means, covs, evaders, n, stream)
    edges = np.linspace(0, total, workers + 1).astype(int)
    jobs = [(means, covs, evaders, n, stream, total, edges[i], edges[i + 1])
            for i in range(workers) if edges[i] < edges[i + 1]]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_mc_slice, jobs))
    return np.concatenate(parts)


# -- subcommand bodies --------------------------------------------------------


def _grid_axes(cfg: ScenarioConfig):
    g = cfg.grid
    xs = np.linspace(g.x_min, g.x_max, g.nx) if g.nx else np.empty(0)
    ys = np.linspace(g.y_min, g.y_max, g.ny) if g.ny else np.empty(0)
    return xs, ys


def cmd_csbez_grid(cfg: ScenarioConfig, args) -> int:
    """Deterministic z(x, y) of the engagement zone at the belief mean."""
    xs, ys = _grid_axes(cfg)
    m = np.array(cfg.belief.mean, copy=True)
    m[3:] = np.maximum(m[3:], PARAM_FLOOR)
    with open(args.out, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["x", "y", "z"])
        for y in ys:
            z = ez_core(xs, np.full_like(xs, y), cfg.evader.heading,
                        cfg.evader.speed, m[0], m[1], m[2], m[3], m[4], m[5])
            for x, zv in zip(xs, np.atleast_1d(z)):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(zv))])
    return 0


def _load_model_or_none(cfg: ScenarioConfig, required: bool):
    if cfg.model_path is None:
        if required:
            raise ConfigError("this command needs model_path in the config")
        return None
    return load_model(cfg.model_path)


def cmd_cspez_eval(cfg: ScenarioConfig, args) -> int:
    method = args.method or "linear"
    model = _load_model_or_none(cfg, required=(method == "nn"))
    g = cfg.grid
    if g.nx < 2 or g.ny < 2:
        raise ConfigError("cspez-eval needs a grid of at least 2x2")
    grid = ev.GridSpec(g.x_min, g.x_max, g.y_min, g.y_max, g.nx, g.ny)
    methods = () if method == "mc" else (method,)
    out = ev.level_set_grid(cfg.belief, cfg.evader.heading, cfg.evader.speed,
                            grid, methods=methods, mc_n=cfg.eval.mc_n,
                            rng_stream=RngStream(cfg.seed, _PATH_GRID),
                            model=model, thresholds=cfg.eval.thresholds)
    ev.write_grid_csv(out, args.out)
    return 0


def _eval_features(cfg: ScenarioConfig):
    rng = RngStream(cfg.seed, _PATH_SAMPLING).generator()
    return latin_hypercube(cfg.eval.n_configs, cfg.training.ranges, rng)


def _error_report(cfg: ScenarioConfig, workers: int):
    from .features import configs_from_features
    model = _load_model_or_none(cfg, required=False)
    features = _eval_features(cfg)
    means, covs, evaders = configs_from_features(features)
    baseline = mc_batch_parallel(means, covs, evaders, cfg.eval.mc_n,
                                 RngStream(cfg.seed, _PATH_LABELS), workers)
    methods = ev.METHODS if model is not None else ("linear", "quadratic")
    predictions = {m: ev.method_probabilities(m, features, model)
                   for m in methods}
    metrics = {m: ev._metrics(m, p, baseline)
               for m, p in predictions.items()}
    report = ev.ErrorReport(n_t=features.shape[0], metrics=metrics,
                            mc_probabilities=baseline,
                            predictions=predictions)
    return features, report


def cmd_compare(cfg: ScenarioConfig, args) -> int:
    _, report = _error_report(cfg, args.workers)
    ev.write_metrics_csv(report, args.out)
    return 0


def cmd_trace_bins(cfg: ScenarioConfig, args) -> int:
    features, report = _error_report(cfg, args.workers)
    traces = ev.covariance_traces(features)
    errors = {m: report.metrics[m].errors for m in report.metrics}
    bins = ev.trace_binned_errors(traces, errors, cfg.eval.bins)
    ev.write_trace_bins_csv(bins, args.out)
    return 0


def _training_set(cfg: ScenarioConfig, workers: int):
    from .features import TrainingSet, configs_from_features
    if cfg.training.mc_n < 1000:
        raise ConfigError("training.mc_n must be at least 1000 for usable "
                          "label accuracy")
    rng = RngStream(cfg.seed, _PATH_SAMPLING).generator()
    features = latin_hypercube(cfg.training.n_samples, cfg.training.ranges,
                               rng)
    if workers <= 1:
        return generate_labels(features, cfg.training.mc_n,
                               RngStream(cfg.seed, _PATH_LABELS),
                               cfg.training.ranges)
    means, covs, evaders = configs_from_features(features)
    labels = mc_batch_parallel(means, covs, evaders, cfg.training.mc_n,
                               RngStream(cfg.seed, _PATH_LABELS), workers)
    meta = {"mc_n": int(cfg.training.mc_n), "seed": int(cfg.seed),
            "rng_path": list(_PATH_LABELS), "n": int(features.shape[0]),
            "ranges": cfg.training.ranges.to_dict()}
    return TrainingSet(features, labels, meta)


def cmd_label(cfg: ScenarioConfig, args) -> int:
    ts = _training_set(cfg, args.workers)
    ts.save(args.out)
    return 0


def cmd_train(cfg: ScenarioConfig, args) -> int:
    ts = _training_set(cfg, args.workers)
    # The shuffle/init seed is the root seed, so --seed governs everything.
    hyper = dataclasses.replace(cfg.training.hyper, seed=cfg.seed)
    model, report = train(ts, hyper, cfg.training.ranges)
    save_model(model, args.out)
    print(f"val_mse={report.val_mse:.3e} val_rmse={report.val_rmse:.3e} "
          f"epochs={report.epochs_run}")
    return 0


def _build_problem(cfg: ScenarioConfig, method: str, epsilon: float, model):
    p = cfg.planner
    return PlanProblem(
        start=p.start, goal=p.goal, v_e=cfg.evader.speed,
        u_lb=p.u_lb, u_ub=p.u_ub, kappa_ub=p.kappa_ub,
        region=OperatingRegion(*p.region), belief=cfg.belief,
        method=method, epsilon=epsilon, model=model,
        n_ctrl=p.n_ctrl, degree=p.degree, n_samples=p.n_samples,
        solver_tol=p.solver_tol, max_outer=p.max_outer)


def _plan_once(cfg: ScenarioConfig, method: str, epsilon: float, model):
    problem = _build_problem(cfg, method, epsilon, model)
    result = plan(problem)
    report = validate(problem, result, cfg.planner.validate_mc_n,
                      RngStream(cfg.seed, _PATH_VALIDATE))
    return result, report


def cmd_plan(cfg: ScenarioConfig, args) -> int:
    method = args.method or cfg.planner.method
    epsilon = args.epsilon if args.epsilon is not None else cfg.planner.epsilon
    if method == "mc":
        raise ConfigError("planning needs a differentiable method: "
                          "linear, quadratic, or nn")
    model = _load_model_or_none(cfg, required=(method == "nn"))
    try:
        result, report = _plan_once(cfg, method, epsilon, model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    payload = {
        "method": method,
        "epsilon": epsilon,
        "t_f": result.t_f,
        "status": result.status,
        "outer_iterations": result.outer_iterations,
        "inner_evaluations": result.inner_evaluations,
        "kkt_residual": result.kkt_residual,
        "max_violation": result.max_violation,
        "wall_time": result.wall_time,
        "trajectory": json.loads(result.trajectory.to_json()),
        "validation": {
            "max_mc_probability": report.max_mc_probability,
            "max_speed_error": report.max_speed_error,
            "max_turn_rate_violation": report.max_turn_rate_violation,
            "max_curvature_violation": report.max_curvature_violation,
            "max_region_violation": report.max_region_violation,
            "endpoint_error": report.endpoint_error,
        },
    }
    with open(args.out, "w", newline="") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return 0 if result.status == "success" else 4


def cmd_table2(cfg: ScenarioConfig, args) -> int:
    """Method x threshold planning matrix with post-hoc MC probabilities."""
    model = _load_model_or_none(cfg, required=True)
    all_ok = True
    with open(args.out, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["method", "epsilon", "t_f", "max_mccspez", "opt_time"])
        for method in _TABLE2_METHODS:
            for eps in cfg.eval.thresholds:
                result, report = _plan_once(cfg, method, eps, model)
                all_ok &= result.status == "success"
                w.writerow([method, repr(float(eps)), repr(result.t_f),
                            repr(report.max_mc_probability),
                            repr(result.wall_time)])
    return 0 if all_ok else 4


_COMMANDS = {
    "csbez-grid": cmd_csbez_grid,
    "cspez-eval": cmd_cspez_eval,
    "compare": cmd_compare,
    "trace-bins": cmd_trace_bins,
    "train": cmd_train,
    "label": cmd_label,
    "plan": cmd_plan,
    "table2": cmd_table2,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cspez",
        description="Engagement-zone estimation and chance-constrained "
                    "trajectory planning")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="scenario config (TOML or JSON)")
        sp.add_argument("--out", required=True, help="output file path")
        sp.add_argument("--seed", type=int, help="override root seed")
        sp.add_argument("--workers", type=int, default=1,
                        help="worker processes for MC batches")
        sp.add_argument("--method",
                        choices=["linear", "quadratic", "nn", "mc"],
                        help="estimator override")
        sp.add_argument("--epsilon", type=float,
                        help="probability threshold override")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.workers is not None and args.workers != 1:
            cfg = dataclasses.replace(cfg, workers=args.workers)
        else:
            args.workers = cfg.workers
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
