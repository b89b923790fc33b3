"""Minimal fully-connected network with exact backprop and Adam updates.

Everything is float64 and plain numpy: at Q-network scale (8-128-64-2)
determinism and finite-difference checkability matter more than speed.
Hidden layers are ReLU, the output layer is affine. Batches and single
rows share one code path (rows are promoted to 1xD internally).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


class Mlp:
    """Affine-ReLU chain; weights are (fan_in, fan_out), biases (fan_out,)."""

    def __init__(self, layer_dims, seed: int | None = None, rng: np.random.Generator | None = None):
        if len(layer_dims) < 2:
            raise ShapeError("need at least input and output dims")
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if rng is None:
            rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"expected input dim {dim}, got shape {x.shape}")
    return x, squeeze


def forward(net: Mlp, x) -> np.ndarray:
    y, _ = forward_cached(net, x)
    return y


def forward_cached(net: Mlp, x):
    """Forward pass keeping pre-activations for the backward pass."""
    h, squeeze = _as_batch(x, net.layer_dims[0])
    pre = []
    acts = [h]
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < net.n_layers - 1 else z
        acts.append(h)
    out = h[0] if squeeze else h
    return out, (pre, acts, squeeze)


def backward(net: Mlp, cache, grad_out):
    """Gradients of sum(output * grad_out) w.r.t. every weight and bias."""
    pre, acts, squeeze = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if squeeze:
        g = g[None, :]
    if g.shape != pre[-1].shape:
        raise ShapeError(f"grad_out shape {g.shape} != output shape {pre[-1].shape}")
    grads_w = [None] * net.n_layers
    grads_b = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        if i < net.n_layers - 1:
            g = g * (pre[i] > 0.0)  # ReLU gate
        grads_w[i] = acts[i].T @ g
        grads_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ net.weights[i].T
    return list(zip(grads_w, grads_b))


@dataclass
class AdamState:
    """Bias-corrected first/second moment accumulators for one Mlp."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, learning_rate: float = 1e-4) -> "AdamState":
        st = cls(learning_rate=learning_rate)
        st.m_w = [np.zeros_like(w) for w in net.weights]
        st.v_w = [np.zeros_like(w) for w in net.weights]
        st.m_b = [np.zeros_like(b) for b in net.biases]
        st.v_b = [np.zeros_like(b) for b in net.biases]
        return st


def adam_update(net: Mlp, grads, opt: AdamState) -> None:
    """One in-place adaptive-moment step on all parameters."""
    if len(grads) != net.n_layers:
        raise ShapeError("gradient list length mismatch")
    opt.step += 1
    c1 = 1.0 - opt.beta1**opt.step
    c2 = 1.0 - opt.beta2**opt.step
    for i, (gw, gb) in enumerate(grads):
        if gw.shape != net.weights[i].shape or gb.shape != net.biases[i].shape:
            raise ShapeError(f"gradient shape mismatch at layer {i}")
        opt.m_w[i] = opt.beta1 * opt.m_w[i] + (1 - opt.beta1) * gw
        opt.v_w[i] = opt.beta2 * opt.v_w[i] + (1 - opt.beta2) * gw**2
        opt.m_b[i] = opt.beta1 * opt.m_b[i] + (1 - opt.beta1) * gb
        opt.v_b[i] = opt.beta2 * opt.v_b[i] + (1 - opt.beta2) * gb**2
        net.weights[i] -= opt.learning_rate * (opt.m_w[i] / c1) / (np.sqrt(opt.v_w[i] / c2) + opt.eps)
        net.biases[i] -= opt.learning_rate * (opt.m_b[i] / c1) / (np.sqrt(opt.v_b[i] / c2) + opt.eps)


def copy_parameters(src: Mlp, dst: Mlp) -> None:
    """Deep-copy src parameters into dst (layer dims must match)."""
    if src.layer_dims != dst.layer_dims:
        raise ShapeError(f"layer dims differ: {src.layer_dims} vs {dst.layer_dims}")
    dst.weights = [w.copy() for w in src.weights]
    dst.biases = [b.copy() for b in src.biases]


def clone(net: Mlp) -> Mlp:
    twin = Mlp(net.layer_dims, seed=0)
    copy_parameters(net, twin)
    return twin


def save_checkpoint(path, net: Mlp, metadata: dict | None = None, opt: AdamState | None = None) -> None:
    doc = {
        "layer_dims": list(net.layer_dims),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "metadata": metadata or {},
    }
    if opt is not None:
        doc["optimizer"] = {
            "learning_rate": opt.learning_rate,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "step": opt.step,
            "m_w": [a.tolist() for a in opt.m_w],
            "v_w": [a.tolist() for a in opt.v_w],
            "m_b": [a.tolist() for a in opt.m_b],
            "v_b": [a.tolist() for a in opt.v_b],
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path):
    """Returns (net, metadata, opt-or-None); float round-trip is exact."""
    with open(path) as fh:
        doc = json.load(fh)
    net = Mlp(doc["layer_dims"], seed=0)
    net.weights = [np.array(w, dtype=np.float64) for w in doc["weights"]]
    net.biases = [np.array(b, dtype=np.float64) for b in doc["biases"]]
    for w, b, (fi, fo) in zip(net.weights, net.biases, zip(net.layer_dims[:-1], net.layer_dims[1:])):
        if w.shape != (fi, fo) or b.shape != (fo,):
            raise ShapeError("checkpoint parameter shapes do not match layer_dims")
    opt = None
    if "optimizer" in doc and doc["optimizer"] is not None:
        o = doc["optimizer"]
        opt = AdamState(
            learning_rate=o["learning_rate"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], step=o["step"]
        )
        opt.m_w = [np.array(a) for a in o["m_w"]]
        opt.v_w = [np.array(a) for a in o["v_w"]]
        opt.m_b = [np.array(a) for a in o["m_b"]]
        opt.v_b = [np.array(a) for a in o["v_b"]]
    return net, doc.get("metadata", {}), opt
