"""Small dense-network engine: layers, analytic backprop, Adam and seeded RNGs.

Arrays are plain ``float64`` numpy arrays with samples along axis 0.  A layer
maps an ``(n, fan_in)`` input to an ``(n, fan_out)`` output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DimensionError, NumericError, StateError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")


def make_rng(seed, *keys):
    """Return a PCG64 generator seeded from ``(seed, *keys)``.

    PCG64 streams are specified bit-for-bit by numpy and do not depend on the
    platform, so a seed (plus optional integer sub-keys such as a fold index)
    reproduces the exact same draws everywhere.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def sigmoid(x):
    return expit(x)


def softmax(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def activate(pre, activation):
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        return expit(pre)
    if activation == "softmax":
        return softmax(pre)
    if activation == "identity":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


def _activation_backward(grad_out, pre, out, activation):
    if activation == "relu":
        return grad_out * (pre > 0)
    if activation == "sigmoid":
        return grad_out * out * (1.0 - out)
    if activation == "softmax":
        return out * (grad_out - np.sum(grad_out * out, axis=1, keepdims=True))
    return grad_out


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.bias.shape[0]:
            raise DimensionError(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]

    @classmethod
    def init(cls, fan_in, fan_out, activation, rng):
        """He-uniform for ReLU layers, Glorot-uniform otherwise; zero bias."""
        if activation == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return cls(w, np.zeros(fan_out), activation)


def _check_input(layer, x):
    if x.ndim != 2 or x.shape[1] != layer.fan_in:
        raise DimensionError(f"input of shape {x.shape} does not match fan-in {layer.fan_in}")


def dense_forward(layer, x):
    x = np.asarray(x, dtype=float)
    _check_input(layer, x)
    return activate(x @ layer.weights + layer.bias, layer.activation)


@dataclass
class ForwardCache:
    """Per-layer (input, pre-activation, output) triples from one forward pass."""

    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


def forward(layers, x):
    """Run ``x`` through ``layers``; return the final output and a cache for backprop."""
    x = np.asarray(x, dtype=float)
    cache = ForwardCache()
    for layer in layers:
        _check_input(layer, x)
        pre = x @ layer.weights + layer.bias
        out = activate(pre, layer.activation)
        cache.inputs.append(x)
        cache.pre.append(pre)
        cache.outputs.append(out)
        x = out
    return x, cache


def backprop(layers, upstream_grad, cache, extra_grads=None):
    """Backpropagate ``upstream_grad`` (dLoss/d final output) through ``layers``.

    ``extra_grads`` maps a layer index to an additional gradient on that
    layer's *output*, for losses that also read hidden activations.

    Returns ``(grads, input_grad)`` where ``grads[i] = (dW_i, db_i)``.
    """
    if cache is None or len(cache.pre) != len(layers):
        raise StateError("backprop needs the cache of a matching forward pass")
    extra_grads = extra_grads or {}
    grads = [None] * len(layers)
    g = np.asarray(upstream_grad, dtype=float)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if i in extra_grads:
            g = g + extra_grads[i]
        if g.shape != cache.outputs[i].shape:
            raise DimensionError(f"gradient {g.shape} does not match layer {i} output {cache.outputs[i].shape}")
        g_pre = _activation_backward(g, cache.pre[i], cache.outputs[i], layer.activation)
        grads[i] = (cache.inputs[i].T @ g_pre, g_pre.sum(axis=0))
        g = g_pre @ layer.weights.T
    return grads, g


class Network:
    """An ordered stack of dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise DimensionError(f"layer widths {a.fan_out} -> {b.fan_in} do not chain")

    @classmethod
    def build(cls, widths, hidden_activation, output_activation, rng):
        layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            act = output_activation if i == len(widths) - 2 else hidden_activation
            layers.append(DenseLayer.init(a, b, act, rng))
        return cls(layers)

    @property
    def fan_in(self):
        return self.layers[0].fan_in

    @property
    def fan_out(self):
        return self.layers[-1].fan_out

    def forward(self, x):
        return forward(self.layers, x)

    def backward(self, upstream_grad, cache, extra_grads=None):
        grads, dx = backprop(self.layers, upstream_grad, cache, extra_grads)
        return self.flatten_grads(grads), dx

    def params(self):
        """Name -> array mapping; arrays are the live layer arrays."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{i}.weights"] = layer.weights
            out[f"{i}.bias"] = layer.bias
        return out

    @staticmethod
    def flatten_grads(grads):
        out = {}
        for i, (dw, db) in enumerate(grads):
            out[f"{i}.weights"] = dw
            out[f"{i}.bias"] = db
        return out


class Adam:
    """Adam with bias correction.  Updates parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def update(self, params, grads):
        for name, g in grads.items():
            if name not in self.m or np.shape(g) != self.m[name].shape:
                raise DimensionError(f"gradient for {name!r} does not match optimizer state")
            if not np.all(np.isfinite(g)):
                raise NumericError(name)
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state, params, grads):
    state.update(params, grads)
    return params
