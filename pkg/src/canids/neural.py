"""Minimal dense-network core: forward/backward, losses, Adam, init.

All models in the package (VAE encoder/decoder, teacher, student) are
chains of affine layers with ReLU or linear activations, trained in double
precision. Gradients are exact reverse-mode derivatives of the composed
chain and are validated against central finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, ShapeError, StateError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Optimization hyperparameters shared by every training phase.

    epsilon is the smoothing constant added inside every logarithm
    (cross-entropy and distillation terms).
    """

    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str  # "relu" | "linear"


@dataclass
class MlpModel:
    layers: list
    seed: int = 0

    @property
    def input_width(self):
        return self.layers[0].w.shape[1]

    @property
    def output_width(self):
        return self.layers[-1].w.shape[0]


def init_layer(fan_in, fan_out, activation, rng):
    # He-uniform for ReLU, Xavier-uniform for linear.
    if activation == "relu":
        limit = math.sqrt(6.0 / fan_in)
    else:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
    return Layer(np.ascontiguousarray(w), np.zeros(fan_out), activation)


def init_mlp(widths, activations, seed):
    """widths = (in, h1, ..., out); len(activations) = len(widths) - 1."""
    if len(activations) != len(widths) - 1:
        raise ConfigError("one activation per layer required")
    rng = np.random.default_rng(seed)
    layers = [
        init_layer(widths[i], widths[i + 1], activations[i], rng)
        for i in range(len(widths) - 1)
    ]
    return MlpModel(layers, seed=seed)


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # layer inputs
    outputs: list = field(default_factory=list)  # post-activation outputs


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x.reshape(1, -1), True) if x.ndim == 1 else (np.ascontiguousarray(x), False)


def forward(model, x, want_cache=False):
    """Batch forward pass; returns output, or (output, cache)."""
    xb, single = _as_batch(x)
    if xb.shape[1] != model.input_width:
        raise ShapeError(f"input width {xb.shape[1]} != model width {model.input_width}")
    cache = ForwardCache() if want_cache else None
    h = xb
    for layer in model.layers:
        pre = kernels.linear_forward(h, layer.w, layer.b)
        out = kernels.relu(pre) if layer.activation == "relu" else pre
        if want_cache:
            cache.inputs.append(h)
            cache.outputs.append(out)
        h = out
    if not np.isfinite(h).all():
        raise NumericError("non-finite values in forward output")
    if single:
        h = h[0]
    return (h, cache) if want_cache else h


def backward(model, cache, gout):
    """Gradients of a scalar loss given d(loss)/d(output).

    Returns ([(gw, gb) per layer], d(loss)/d(input)).
    """
    if cache is None or len(cache.inputs) != len(model.layers):
        raise StateError("cache does not match model")
    g = np.ascontiguousarray(np.asarray(gout, dtype=np.float64))
    if g.ndim == 1:
        g = g.reshape(1, -1)
    grads = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        x_in, out = cache.inputs[k], cache.outputs[k]
        if x_in.shape[0] != g.shape[0] or out.shape[1] != g.shape[1]:
            raise StateError("cache is stale for this gradient")
        if layer.activation == "relu":
            g = kernels.relu_backward(out, g)
        gw, gb, g = kernels.linear_backward(x_in, layer.w, g)
        grads[k] = (gw, gb)
    return grads, g


def softmax_t(logits, temperature=1.0):
    """Temperature-softened softmax with max-subtraction for stability."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z2 = np.atleast_2d(z) / temperature
    z2 = z2 - z2.max(axis=1, keepdims=True)
    e = np.exp(z2)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def softmax_t_backward(probs, gprobs, temperature=1.0):
    """d(loss)/d(logits) given probs = softmax_t(logits, T) and d(loss)/d(probs)."""
    dot = (gprobs * probs).sum(axis=1, keepdims=True)
    return probs * (gprobs - dot) / temperature


def _label_indices(probs, labels):
    labels = np.asarray(labels)
    if labels.ndim == probs.ndim:  # one-hot rows
        if labels.shape != probs.shape:
            raise ShapeError(f"label shape {labels.shape} != {probs.shape}")
        return labels.argmax(axis=-1)
    return labels.astype(np.int64)


def cross_entropy(probs, labels, epsilon):
    """Mean of -log(p[label] + epsilon) over the batch."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    idx = np.atleast_1d(_label_indices(np.asarray(probs), labels))
    if idx.shape[0] != p.shape[0]:
        raise ShapeError(f"{idx.shape[0]} labels for {p.shape[0]} rows")
    if idx.max(initial=0) >= p.shape[1]:
        raise ShapeError("label index out of range")
    return float(-np.log(p[np.arange(p.shape[0]), idx] + epsilon).mean())


def softmax_ce_grad(logits, labels, epsilon, temperature=1.0):
    """Cross-entropy loss on softened logits and its gradient w.r.t. logits."""
    p = np.atleast_2d(softmax_t(logits, temperature))
    idx = np.atleast_1d(_label_indices(p, labels))
    B = p.shape[0]
    picked = p[np.arange(B), idx]
    loss = float(-np.log(picked + epsilon).mean())
    gp = np.zeros_like(p)
    gp[np.arange(B), idx] = -1.0 / (picked + epsilon) / B
    return loss, softmax_t_backward(p, gp, temperature)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def adam_init(params):
    """params: flat list of arrays (the order used by adam_step)."""
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(params, grads, state, learning_rate):
    """Standard Adam update, in place on the parameter arrays."""
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient")
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        kernels.adam_update(
            p.reshape(-1),
            np.ascontiguousarray(g.reshape(-1)),
            m.reshape(-1),
            v.reshape(-1),
            state.t,
            learning_rate,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
        )


def model_params(model):
    out = []
    for layer in model.layers:
        out.append(layer.w)
        out.append(layer.b)
    return out


def grads_to_flat(layer_grads):
    out = []
    for gw, gb in layer_grads:
        out.append(gw)
        out.append(gb)
    return out


def iterate_minibatches(n, batch_size, rng):
    """Yield index arrays covering a fresh permutation of range(n)."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def count_params(model_or_layers):
    """Total trainable parameters: sum over layers of (in + 1) * out."""
    layers = getattr(model_or_layers, "layers", model_or_layers)
    total = 0
    for layer in layers:
        out_w, in_w = layer.w.shape
        total += (in_w + 1) * out_w
    return total
