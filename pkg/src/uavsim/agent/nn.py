"""Small dense networks with hand-written reverse mode and Adam."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Mlp:
    """Fully connected net: tanh on hidden layers, linear output.

    ``weights[i]`` has shape ``(sizes[i], sizes[i+1])``.
    """

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i}: bad shapes {w.shape}, {b.shape}")

    @classmethod
    def init(cls, sizes, rng, out_scale: float = 1.0, hidden_gain: float = np.sqrt(2.0)) -> "Mlp":
        """Orthogonal init; the last layer is scaled by ``out_scale``."""
        weights, biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_scale if i == len(sizes) - 2 else hidden_gain
            a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            w = q if n_in >= n_out else q.T
            weights.append(gain * w[:n_in, :n_out])
            biases.append(np.zeros(n_out))
        return cls(list(sizes), weights, biases)

    @classmethod
    def zeros(cls, sizes) -> "Mlp":
        return cls(
            list(sizes),
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(list(self.sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _check_input(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} does not match first layer {net.sizes[0]}")
    return x


def _forward_cache(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def mlp_forward(net: Mlp, x) -> np.ndarray:
    """Works on a single vector or a ``(N, in)`` batch."""
    return _forward_cache(net, _check_input(net, x))[-1]


def backprop(net: Mlp, x, output_grad) -> list[np.ndarray]:
    """Gradients of ``sum(output * output_grad)`` w.r.t. the parameters.

    Returned in :meth:`Mlp.params` order (W0, b0, W1, b1, ...). Batched
    inputs accumulate over the batch.
    """
    x = _check_input(net, x)
    g = np.asarray(output_grad, dtype=float)
    if g.shape[-1] != net.sizes[-1]:
        raise ValueError(f"output_grad width {g.shape[-1]} does not match output {net.sizes[-1]}")
    acts = _forward_cache(net, np.atleast_2d(x))
    g = np.atleast_2d(g)
    grads: list[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        grads = [acts[i].T @ g, g.sum(axis=0)] + grads
        if i > 0:
            g = (g @ net.weights[i].T) * (1.0 - acts[i] ** 2)
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class AdamConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_update(params, grads, state: AdamState, cfg) -> list[np.ndarray]:
    """One bias-corrected Adam step, descending ``grads``. Updates arrays in place."""
    lr = cfg.lr
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.eps
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def clip_by_global_norm(grads, max_norm: float | None) -> tuple[list[np.ndarray], float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm
