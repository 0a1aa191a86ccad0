"""Adam training loop for the surrogate regressor.

Minimizes mean squared error between the sigmoid output and Monte Carlo
probability labels (the square root of the same objective is reported as
RMSE).  Single-threaded and bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureRanges
from .mlp import LAYER_SIZES, LN_EPS, MlpModel, _sigmoid


class TrainingError(RuntimeError):
    """Training diverged or was given unusable data."""


@dataclass
class Hyper:
    learning_rate: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainReport:
    train_mse: float
    val_mse: float
    val_rmse: float
    epochs_run: int
    history: list = field(default_factory=list)


def _init_params(rng):
    params = {}
    for i in range(len(LAYER_SIZES) - 2):
        fan_in = LAYER_SIZES[i]
        params[f"w{i}"] = rng.normal(0.0, math.sqrt(2.0 / fan_in),
                                     (LAYER_SIZES[i + 1], fan_in))
        params[f"b{i}"] = np.zeros(LAYER_SIZES[i + 1])
        params[f"g{i}"] = np.ones(LAYER_SIZES[i + 1])
        params[f"o{i}"] = np.zeros(LAYER_SIZES[i + 1])
    params["out_w"] = rng.normal(0.0, math.sqrt(1.0 / LAYER_SIZES[-2]),
                                 (1, LAYER_SIZES[-2]))
    params["out_b"] = np.zeros(1)
    return params


def _forward(params, x, want_caches=False):
    h = x
    caches = []
    for i in range(len(LAYER_SIZES) - 2):
        w, b = params[f"w{i}"], params[f"b{i}"]
        g, o = params[f"g{i}"], params[f"o{i}"]
        z = h @ w.T + b
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        zn = (z - mu) * inv
        a = zn * g + o
        s = _sigmoid(a)
        if want_caches:
            caches.append((h, zn, inv, a, s))
        h = a * s
    y = _sigmoid(h @ params["out_w"].T + params["out_b"])[:, 0]
    return (y, h, caches) if want_caches else y


def _backward(params, x, targets):
    """MSE loss value and parameter gradients for one batch."""
    y, h_last, caches = _forward(params, x, want_caches=True)
    bsz = x.shape[0]
    resid = y - targets
    loss = float(resid @ resid) / bsz
    grads = {}
    du = (2.0 * resid / bsz) * y * (1.0 - y)       # (B,)
    grads["out_w"] = du[None, :] @ h_last
    grads["out_b"] = np.array([du.sum()])
    dh = du[:, None] @ params["out_w"]
    for i in reversed(range(len(LAYER_SIZES) - 2)):
        h_prev, zn, inv, a, s = caches[i]
        da = dh * (s + a * s * (1.0 - s))
        grads[f"o{i}"] = da.sum(axis=0)
        grads[f"g{i}"] = (da * zn).sum(axis=0)
        dzn = da * params[f"g{i}"]
        dz = inv * (dzn - dzn.mean(axis=1, keepdims=True)
                    - zn * (dzn * zn).mean(axis=1, keepdims=True))
        grads[f"b{i}"] = dz.sum(axis=0)
        grads[f"w{i}"] = dz.T @ h_prev
        dh = dz @ params[f"w{i}"]
    return loss, grads


def _standardize_stats(features):
    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def train(training_set, hyper: Hyper = None, ranges: FeatureRanges = None):
    """Fit the regressor; returns (MlpModel, TrainReport).

    The last ``val_fraction`` of a seeded shuffle is held out for early
    stopping; the best-validation parameters are returned.
    """
    hyper = hyper or Hyper()
    features = np.asarray(training_set.features, dtype=float)
    labels = np.asarray(training_set.labels, dtype=float)
    n = features.shape[0]
    if n < 2:
        raise TrainingError("not enough samples to split train/val")
    rng = np.random.default_rng(hyper.seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(hyper.val_fraction * n)))
    val_idx, tr_idx = order[n - n_val:], order[:n - n_val]

    mean, scale = _standardize_stats(features[tr_idx])
    xs = (features - mean) / scale
    x_tr, t_tr = xs[tr_idx], labels[tr_idx]
    x_val, t_val = xs[val_idx], labels[val_idx]

    params = _init_params(rng)
    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}
    n_tr = x_tr.shape[0]
    steps_per_epoch = max(1, math.ceil(n_tr / hyper.batch_size))
    total_steps = steps_per_epoch * hyper.max_epochs

    best_val = math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    bad_epochs = 0
    history = []
    step = 0
    last_train = math.inf
    epochs_run = 0
    for epoch in range(hyper.max_epochs):
        epochs_run = epoch + 1
        perm = rng.permutation(n_tr)
        epoch_loss = 0.0
        for lo in range(0, n_tr, hyper.batch_size):
            idx = perm[lo:lo + hyper.batch_size]
            loss, grads = _backward(params, x_tr[idx], t_tr[idx])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"loss diverged at epoch {epoch}, step {step}")
            epoch_loss += loss * idx.shape[0]
            step += 1
            lr = hyper.learning_rate * 0.5 * (
                1.0 + math.cos(math.pi * step / total_steps))
            b1, b2 = hyper.adam_beta1, hyper.adam_beta2
            for k, gval in grads.items():
                m_state[k] = b1 * m_state[k] + (1 - b1) * gval
                v_state[k] = b2 * v_state[k] + (1 - b2) * gval * gval
                mhat = m_state[k] / (1 - b1 ** step)
                vhat = v_state[k] / (1 - b2 ** step)
                params[k] -= lr * mhat / (np.sqrt(vhat) + hyper.adam_eps)
        last_train = epoch_loss / n_tr
        val_pred = _forward(params, x_val)
        val_mse = float(np.mean((val_pred - t_val) ** 2))
        history.append((epoch, last_train, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best_params = {k: v.copy() for k, v in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= hyper.patience:
                break

    if ranges is None and "ranges" in training_set.meta:
        ranges = FeatureRanges.from_dict(training_set.meta["ranges"])
    if ranges is None:
        ranges = FeatureRanges()
    n_hidden = len(LAYER_SIZES) - 2
    f32 = lambda a: np.asarray(a, dtype=np.float32)
    model = MlpModel(
        weights=[f32(best_params[f"w{i}"]) for i in range(n_hidden)],
        biases=[f32(best_params[f"b{i}"]) for i in range(n_hidden)],
        ln_gain=[f32(best_params[f"g{i}"]) for i in range(n_hidden)],
        ln_offset=[f32(best_params[f"o{i}"]) for i in range(n_hidden)],
        out_w=f32(best_params["out_w"]), out_b=f32(best_params["out_b"]),
        feat_mean=f32(mean), feat_scale=f32(scale),
        range_lo=f32(ranges.lo), range_hi=f32(ranges.hi),
        meta={"seed": hyper.seed, "epochs": epochs_run,
              "val_mse": best_val},
    )
    report = TrainReport(train_mse=last_train, val_mse=best_val,
                         val_rmse=math.sqrt(best_val),
                         epochs_run=epochs_run, history=history)
    return model, report
