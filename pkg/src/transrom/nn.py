"""Small feed-forward networks with exact reverse-mode gradients.

Hidden layers apply tanh; the output layer applies softmax to its affine
pre-activation and then adds a bias vector componentwise, so the output
components minus their biases always sum to one. Everything is batch
vectorized float64 numpy; gradients are assembled by hand (no framework).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    """Fully connected network; ``weights[l]`` has shape (dims[l+1], dims[l]).

    The last bias vector is the componentwise shift added after the softmax
    of the output layer; all other biases act inside tanh layers.
    """

    weights: list
    biases: list

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def parameters(self) -> list:
        """Flat parameter list [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases])


def mlp_init(layer_dims, seed) -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic for a given seed.

    ``seed`` may be an integer or a ``numpy.random.Generator`` (the latter
    lets several networks share one seeded stream).
    """
    if len(layer_dims) < 2 or any(int(d) < 1 for d in layer_dims):
        raise ValueError(f"layer_dims must hold at least two positive sizes, got {layer_dims}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; accepts a single input vector or a (B, d) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != net.input_dim:
        raise ValueError(f"input dimension {a.shape[1]} does not match network input {net.input_dim}")
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.tanh(a @ W.T + b)
    y = _softmax(a @ net.weights[-1].T) + net.biases[-1]
    return y[0] if single else y


@dataclass
class ForwardCache:
    """Intermediate activations retained for the backward pass."""

    activations: list  # input plus every hidden tanh output
    softmax: np.ndarray


def mlp_forward_cached(net: Mlp, X: np.ndarray):
    acts = [np.asarray(X, dtype=float)]
    a = acts[0]
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.tanh(a @ W.T + b)
        acts.append(a)
    s = _softmax(a @ net.weights[-1].T)
    return s + net.biases[-1], ForwardCache(acts, s)


def mlp_backward(net: Mlp, cache: ForwardCache, dY: np.ndarray) -> list:
    """Gradients of sum(dY * output) w.r.t. parameters, ordered as parameters().

    ``dY`` is the upstream gradient of shape (B, output_dim).
    """
    grads = [None] * (2 * len(net.weights))
    s = cache.softmax
    # softmax jacobian: dz_i = s_i * (g_i - sum_j g_j s_j)
    dz = s * (dY - (dY * s).sum(axis=1, keepdims=True))
    a_prev = cache.activations[-1]
    grads[-2] = dz.T @ a_prev
    grads[-1] = dY.sum(axis=0)  # bias sits outside the softmax
    da = dz @ net.weights[-1]
    for l in range(len(net.weights) - 2, -1, -1):
        a = cache.activations[l + 1]
        dpre = da * (1.0 - a * a)
        grads[2 * l] = dpre.T @ cache.activations[l]
        grads[2 * l + 1] = dpre.sum(axis=0)
        if l > 0:
            da = dpre @ net.weights[l]
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators mirroring a flat parameter list."""

    first: list
    second: list
    step: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place on ``params``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state
