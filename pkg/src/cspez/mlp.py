"""From-scratch MLP regressor: layer norm + SiLU hidden layers, sigmoid head.

Hidden widths are 512, 256, 256, 128 on 14 standardized inputs.  Parameters
live in float32 (matching the on-disk payload exactly); arithmetic runs in
float64.  The file format is a small versioned container: magic, JSON header
with shapes and metadata, then a little-endian float32 payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LAYER_SIZES = (14, 512, 256, 256, 128, 1)
LN_EPS = 1e-6

_MAGIC = b"CSPEZMLP"
_VERSION = 1


class ModelError(ValueError):
    """Malformed or inconsistent surrogate model."""


@dataclass
class MlpModel:
    weights: list          # hidden Ws, shapes (out, in)
    biases: list
    ln_gain: list
    ln_offset: list
    out_w: np.ndarray      # (1, 128)
    out_b: np.ndarray      # (1,)
    feat_mean: np.ndarray  # (14,)
    feat_scale: np.ndarray
    range_lo: np.ndarray   # training box, (14,)
    range_hi: np.ndarray
    meta: dict = None

    def __post_init__(self):
        n_hidden = len(LAYER_SIZES) - 2
        if not (len(self.weights) == len(self.biases)
                == len(self.ln_gain) == len(self.ln_offset) == n_hidden):
            raise ModelError("expected one parameter set per hidden layer")
        for i in range(n_hidden):
            want = (LAYER_SIZES[i + 1], LAYER_SIZES[i])
            if self.weights[i].shape != want:
                raise ModelError(f"layer {i} weight shape {self.weights[i].shape}, "
                                 f"expected {want}")
            for arr in (self.biases[i], self.ln_gain[i], self.ln_offset[i]):
                if arr.shape != (LAYER_SIZES[i + 1],):
                    raise ModelError(f"layer {i} vector shape mismatch")
        if self.out_w.shape != (1, LAYER_SIZES[-2]) or self.out_b.shape != (1,):
            raise ModelError("output layer shape mismatch")
        for arr in (self.feat_mean, self.feat_scale,
                    self.range_lo, self.range_hi):
            if arr.shape != (LAYER_SIZES[0],):
                raise ModelError("feature statistics must be length 14")
        if self.meta is None:
            self.meta = {}

    def _arrays(self):
        out = []
        for i in range(len(self.weights)):
            out += [(f"w{i}", self.weights[i]), (f"b{i}", self.biases[i]),
                    (f"g{i}", self.ln_gain[i]), (f"o{i}", self.ln_offset[i])]
        out += [("out_w", self.out_w), ("out_b", self.out_b),
                ("feat_mean", self.feat_mean), ("feat_scale", self.feat_scale),
                ("range_lo", self.range_lo), ("range_hi", self.range_hi)]
        return out


def silu(x):
    return x / (1.0 + np.exp(-x))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def forward(model: MlpModel, x):
    """Probability output for one feature vector or a batch (N, 14)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    squeeze = x.shape[0] == 1
    h = (x - model.feat_mean.astype(float)) / model.feat_scale.astype(float)
    for w, b, g, o in zip(model.weights, model.biases,
                          model.ln_gain, model.ln_offset):
        z = h @ w.T.astype(float) + b.astype(float)
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        zn = (z - mu) / np.sqrt(var + LN_EPS)
        h = silu(zn * g.astype(float) + o.astype(float))
    y = _sigmoid(h @ model.out_w.T.astype(float) + model.out_b.astype(float))
    y = y[:, 0]
    return float(y[0]) if squeeze else y


def input_gradient(model: MlpModel, x):
    """Analytic d(output)/d(input) for one feature vector or a batch."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    squeeze = x.shape[0] == 1
    scale = model.feat_scale.astype(float)
    h = (x - model.feat_mean.astype(float)) / scale
    caches = []
    for w, b, g, o in zip(model.weights, model.biases,
                          model.ln_gain, model.ln_offset):
        w = w.astype(float)
        g = g.astype(float)
        z = h @ w.T + b.astype(float)
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        zn = (z - mu) * inv
        a = zn * g + o.astype(float)
        caches.append((w, g, zn, inv, a))
        h = silu(a)
    out_w = model.out_w.astype(float)
    y = _sigmoid(h @ out_w.T + model.out_b.astype(float))
    grad = (y * (1.0 - y)) @ out_w                     # d y / d h_last
    for w, g, zn, inv, a in reversed(caches):
        sa = _sigmoid(a)
        grad = grad * (sa + a * sa * (1.0 - sa))       # through SiLU
        grad = grad * g                                 # through gain
        n = zn.shape[1]
        # LayerNorm backward: remove mean and zn-projection components.
        grad = inv * (grad - grad.mean(axis=1, keepdims=True)
                      - zn * (grad * zn).mean(axis=1, keepdims=True))
        grad = grad @ w                                 # through linear
    grad = grad / scale
    return grad[0] if squeeze else grad


def in_training_box(model: MlpModel, fv) -> bool:
    fv = np.asarray(fv, dtype=float)
    return bool(np.all(fv >= model.range_lo.astype(float) - 1e-12)
                and np.all(fv <= model.range_hi.astype(float) + 1e-12))


def save_model(model: MlpModel, path):
    arrays = model._arrays()
    header = {
        "version": _VERSION,
        "layer_sizes": list(LAYER_SIZES),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "meta": model.meta,
    }
    hb = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_model(path) -> MlpModel:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != _MAGIC:
        raise ModelError("not a surrogate model file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode())
    if header.get("version") != _VERSION:
        raise ModelError(f"unsupported model version {header.get('version')}")
    off = 12 + hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += 4 * count
        arrays[spec["name"]] = arr.reshape(shape).copy()
    n_hidden = len(LAYER_SIZES) - 2
    try:
        return MlpModel(
            weights=[arrays[f"w{i}"] for i in range(n_hidden)],
            biases=[arrays[f"b{i}"] for i in range(n_hidden)],
            ln_gain=[arrays[f"g{i}"] for i in range(n_hidden)],
            ln_offset=[arrays[f"o{i}"] for i in range(n_hidden)],
            out_w=arrays["out_w"], out_b=arrays["out_b"],
            feat_mean=arrays["feat_mean"], feat_scale=arrays["feat_scale"],
            range_lo=arrays["range_lo"], range_hi=arrays["range_hi"],
            meta=header.get("meta", {}),
        )
    except KeyError as exc:
        raise ModelError(f"model file missing array {exc}") from exc
