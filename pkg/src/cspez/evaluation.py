"""Accuracy metrics, level-set grids, and trace-binned error analysis.

All comparisons use the Monte Carlo estimate as the baseline.  Reports are
plain dataclasses plus CSV writers; no plotting here, the CSV layouts are
meant to be fed to any external plotter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .belief import PursuerBelief, RngStream
from .estimators import (linear_cspez_batch, mc_cspez_batch,
                         quadratic_cspez_batch)
from .features import FEATURE_NAMES, build_features, configs_from_features
from .geometry import EvaderState

METHODS = ("linear", "quadratic", "nn")

_TRACE_COLS = tuple(FEATURE_NAMES.index(n) for n in
                    ("var_xP", "var_yP", "var_psiP",
                     "var_a", "var_R", "var_vP"))


@dataclass(frozen=True)
class MethodMetrics:
    method: str
    mse: float
    aae: float
    max_ae: float
    errors: np.ndarray = field(repr=False)   # signed, per configuration

    def __post_init__(self):
        rmse = np.sqrt(self.mse)
        if not (self.aae <= rmse + 1e-12 and rmse <= self.max_ae + 1e-12):
            raise ValueError("metrics must satisfy AAE <= RMSE <= MaxAE")


@dataclass(frozen=True)
class ErrorReport:
    n_t: int
    metrics: dict                    # method -> MethodMetrics
    mc_probabilities: np.ndarray
    predictions: dict                # method -> (N,) probabilities


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = -4.0
    y_max: float = 4.0
    nx: int = 101
    ny: int = 101

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid resolution must be at least 2x2")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("grid extents must be increasing")

    def axes(self):
        return (np.linspace(self.x_min, self.x_max, self.nx),
                np.linspace(self.y_min, self.y_max, self.ny))


@dataclass(frozen=True)
class LevelSetGrid:
    x: np.ndarray
    y: np.ndarray
    mc: np.ndarray                   # (ny, nx) baseline probabilities
    probabilities: dict              # method -> (ny, nx)
    abs_error: dict                  # method -> (ny, nx)
    thresholds: tuple = (0.01, 0.05, 0.25, 0.5)


@dataclass(frozen=True)
class TraceBinReport:
    edges: np.ndarray                # (bins + 1,)
    counts: np.ndarray               # (bins,)
    medians: dict                    # method -> (bins,), NaN on empty bins
    empty_bins: tuple
    spearman: dict                   # method -> rank correlation


def _metrics(method, pred, baseline):
    err = np.asarray(pred, dtype=float) - np.asarray(baseline, dtype=float)
    ae = np.abs(err)
    return MethodMetrics(method=method, mse=float(np.mean(err * err)),
                         aae=float(np.mean(ae)), max_ae=float(ae.max()),
                         errors=err)


def method_probabilities(method, features, model=None):
    """Batch probabilities for one estimator over feature rows (N, 14)."""
    features = np.asarray(features, dtype=float)
    if method == "nn":
        if model is None:
            raise ValueError("the nn method needs a trained model")
        from .mlp import forward
        return np.atleast_1d(forward(model, features))
    means, covs, evaders = configs_from_features(features)
    if method == "linear":
        return linear_cspez_batch(means, covs, evaders)[0]
    if method == "quadratic":
        return quadratic_cspez_batch(means, covs, evaders)[0]
    raise ValueError(f"unknown method {method!r}")


def compare_methods(features, mc_n, rng_stream: RngStream, model=None,
                    methods=METHODS) -> ErrorReport:
    """Error metrics of the closed-form and surrogate estimators vs MC.

    ``features`` are configuration rows (N, 14) in the canonical feature
    layout; the MC baseline uses ``mc_n`` samples per row.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("need a nonempty (N, 14) configuration array")
    if model is None:
        methods = tuple(m for m in methods if m != "nn")
    means, covs, evaders = configs_from_features(features)
    baseline = mc_cspez_batch(means, covs, evaders, mc_n, rng_stream)
    predictions = {m: method_probabilities(m, features, model)
                   for m in methods}
    metrics = {m: _metrics(m, p, baseline) for m, p in predictions.items()}
    return ErrorReport(n_t=features.shape[0], metrics=metrics,
                       mc_probabilities=baseline, predictions=predictions)


def grid_features(belief: PursuerBelief, psi_e, v_e, grid: GridSpec):
    """Feature rows for every grid cell, row-major over (y, x)."""
    xs, ys = grid.axes()
    base = build_features(belief, EvaderState(0.0, 0.0, psi_e, v_e))
    gx, gy = np.meshgrid(xs, ys)
    features = np.tile(base, (gx.size, 1))
    features[:, 10] = gx.ravel() - belief.mean[0]
    features[:, 11] = gy.ravel() - belief.mean[1]
    return features


def level_set_grid(belief: PursuerBelief, psi_e, v_e, grid: GridSpec = None,
                   methods=METHODS, mc_n=10_000, rng_stream: RngStream = None,
                   model=None, thresholds=(0.01, 0.05, 0.25, 0.5)):
    """Per-method probability fields over evader positions, plus MC errors."""
    grid = grid or GridSpec()
    rng_stream = rng_stream or RngStream(0)
    if model is None:
        methods = tuple(m for m in methods if m != "nn")
    xs, ys = grid.axes()
    features = grid_features(belief, psi_e, v_e, grid)
    means, covs, evaders = configs_from_features(features)
    shape = (grid.ny, grid.nx)
    mc = mc_cspez_batch(means, covs, evaders, mc_n, rng_stream).reshape(shape)
    probs = {}
    errs = {}
    for m in methods:
        p = method_probabilities(m, features, model).reshape(shape)
        probs[m] = p
        errs[m] = np.abs(p - mc)
    return LevelSetGrid(x=xs, y=ys, mc=mc, probabilities=probs,
                        abs_error=errs, thresholds=tuple(thresholds))


def mean_turn_centers(belief: PursuerBelief):
    """Centers of the two turn circles at the pursuer mean state."""
    px, py, psi, a = belief.mean[0], belief.mean[1], belief.mean[2], belief.mean[3]
    nx, ny = -np.sin(psi), np.cos(psi)
    return np.array([[px + a * nx, py + a * ny],
                     [px - a * nx, py - a * ny]])


def covariance_traces(features):
    """Trace of the pursuer covariance for each configuration row."""
    features = np.asarray(features, dtype=float)
    return features[:, list(_TRACE_COLS)].sum(axis=1)


def trace_binned_errors(traces, errors, bins: int = 20) -> TraceBinReport:
    """Median absolute error per uniform trace bin, per method.

    ``errors`` maps method name to per-configuration signed or absolute
    errors aligned with ``traces``.  Empty bins are skipped and flagged.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    traces = np.asarray(traces, dtype=float)
    edges = np.linspace(traces.min(), traces.max(), bins + 1)
    # Right-inclusive last bin so the maximum trace lands in bin bins-1.
    idx = np.clip(np.searchsorted(edges, traces, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    empty = tuple(int(i) for i in np.flatnonzero(counts == 0))
    medians = {}
    rho = {}
    for m, err in errors.items():
        ae = np.abs(np.asarray(err, dtype=float))
        med = np.full(bins, np.nan)
        for i in range(bins):
            if counts[i]:
                med[i] = np.median(ae[idx == i])
        medians[m] = med
        if np.ptp(ae) == 0.0 or np.ptp(traces) == 0.0:
            rho[m] = float("nan")  # rank correlation undefined
        else:
            rho[m] = float(spearmanr(traces, ae).statistic)
    return TraceBinReport(edges=edges, counts=counts, medians=medians,
                          empty_bins=empty, spearman=rho)


# -- CSV writers --------------------------------------------------------------


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_metrics_csv(report: ErrorReport, path):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["method", "MSE", "AAE", "MaxAE"])
        for m in METHODS:
            if m in report.metrics:
                mm = report.metrics[m]
                w.writerow([m, repr(mm.mse), repr(mm.aae), repr(mm.max_ae)])


def write_grid_csv(grid: LevelSetGrid, path):
    """Long-format dump: one row per (cell, method), including the baseline."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["x", "y", "method", "p", "abs_err"])
        order = ["mc"] + [m for m in METHODS if m in grid.probabilities]
        for m in order:
            p = grid.mc if m == "mc" else grid.probabilities[m]
            e = np.zeros_like(p) if m == "mc" else grid.abs_error[m]
            for j, y in enumerate(grid.y):
                for i, x in enumerate(grid.x):
                    w.writerow([repr(float(x)), repr(float(y)), m,
                                repr(float(p[j, i])), repr(float(e[j, i]))])


def write_trace_bins_csv(report: TraceBinReport, path):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["bin_lo", "bin_hi", "method", "median_err"])
        for m in METHODS:
            if m not in report.medians:
                continue
            for i in range(len(report.counts)):
                if i in report.empty_bins:
                    continue
                w.writerow([repr(float(report.edges[i])),
                            repr(float(report.edges[i + 1])), m,
                            repr(float(report.medians[m][i]))])
