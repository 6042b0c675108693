"""Hybrid action distribution: tanh-squashed diagonal Gaussian for the 3D
move and a categorical over GBS indices for the next serving cell.

Functions accept batched heads (``mean`` of shape ``(N, 3)``, ``gbs_logits``
of shape ``(N, M)``) as well as single samples. ``log_std`` is shared across
the batch.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

LOG_2PI_E = np.log(2.0 * np.pi * np.e)
SQUASH_EPS = 1e-6
_GH_NODES, _GH_WEIGHTS = hermegauss(48)
_GH_WEIGHTS = _GH_WEIGHTS / np.sqrt(2.0 * np.pi)


class PolicyOutput(NamedTuple):
    mean: np.ndarray
    log_std: np.ndarray
    gbs_logits: np.ndarray | None


class HybridAction(NamedTuple):
    delta: np.ndarray  # in (-1, 1) after the squash
    gbs: np.ndarray | int  # categorical index, not the GBS id
    pre_tanh: np.ndarray


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def log1m_tanh2(u):
    """``log(1 - tanh(u)^2)`` without cancellation for large ``|u|``."""
    u = np.asarray(u, dtype=float)
    return 2.0 * (np.log(2.0) - np.abs(u) - np.log1p(np.exp(-2.0 * np.abs(u))))


def _gauss_logpdf(u, mean, log_std):
    std = np.exp(log_std)
    return -0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)


def unsquash(delta) -> np.ndarray:
    a = np.clip(np.asarray(delta, dtype=float), -1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS)
    return np.arctanh(a)


def policy_sample(out: PolicyOutput, rng, deterministic: bool = False) -> tuple[HybridAction, np.ndarray]:
    """Draw an action and its log-probability.

    ``deterministic`` returns the distribution modes, ``tanh(mean)`` and
    the argmax GBS, with the log-density evaluated there.
    """
    mean = np.asarray(out.mean, dtype=float)
    if deterministic:
        u = mean.copy()
    else:
        u = mean + np.exp(out.log_std) * rng.standard_normal(mean.shape)
    gbs = None
    if out.gbs_logits is not None:
        logits = np.asarray(out.gbs_logits, dtype=float)
        if deterministic:
            gbs = np.argmax(logits, axis=-1)
        else:
            p = softmax(logits)
            cdf = np.cumsum(p, axis=-1)
            draw = rng.random(p.shape[:-1] + (1,))
            gbs = np.minimum((draw > cdf).sum(axis=-1), p.shape[-1] - 1)
    action = HybridAction(np.tanh(u), gbs, u)
    return action, logprob_pre_tanh(out, u, gbs)


def logprob_pre_tanh(out: PolicyOutput, u, gbs) -> np.ndarray:
    lp = (_gauss_logpdf(u, out.mean, out.log_std) - log1m_tanh2(u)).sum(axis=-1)
    if out.gbs_logits is not None and gbs is not None:
        ls = log_softmax(np.asarray(out.gbs_logits, dtype=float))
        lp = lp + np.take_along_axis(ls, np.asarray(gbs)[..., None], axis=-1)[..., 0]
    return lp


def policy_logprob(out: PolicyOutput, action) -> np.ndarray:
    """Log-density of ``(delta, gbs)``; ``delta`` is clamped inside (-1, 1) by 1e-6."""
    delta, gbs = action[0], action[1]
    return logprob_pre_tanh(out, unsquash(delta), gbs)


def squash_correction(mean, log_std):
    """Expected ``log(1 - tanh(u)^2)`` under ``u ~ N(mean, std)``, with its
    derivatives w.r.t. ``mean`` and ``log_std`` (Gauss-Hermite, 48 nodes)."""
    mean = np.asarray(mean, dtype=float)
    std = np.exp(log_std)
    u = mean[..., None] + std[..., None] * _GH_NODES
    val = (log1m_tanh2(u) * _GH_WEIGHTS).sum(axis=-1)
    fprime = -2.0 * np.tanh(u)
    d_mean = (fprime * _GH_WEIGHTS).sum(axis=-1)
    d_log_std = (fprime * _GH_NODES * _GH_WEIGHTS).sum(axis=-1) * std
    return val, d_mean, d_log_std


def policy_entropy(out: PolicyOutput) -> np.ndarray:
    """Entropy of the squashed Gaussian plus the categorical entropy."""
    mean = np.asarray(out.mean, dtype=float)
    log_std = np.broadcast_to(out.log_std, mean.shape)
    corr, _, _ = squash_correction(mean, log_std)
    h = (0.5 * LOG_2PI_E + log_std + corr).sum(axis=-1)
    if out.gbs_logits is not None:
        h = h + categorical_entropy(np.asarray(out.gbs_logits, dtype=float))
    return h


def categorical_entropy(logits) -> np.ndarray:
    ls = log_softmax(np.asarray(logits, dtype=float))
    return -(np.exp(ls) * ls).sum(axis=-1)


def logprob_grads(out: PolicyOutput, u, gbs):
    """Derivatives of the log-probability w.r.t. mean, log_std and logits.

    Shapes follow the heads: ``(N, 3)``, ``(N, 3)`` per sample, ``(N, M)``.
    """
    std = np.exp(out.log_std)
    z = (u - out.mean) / std
    d_mean = z / std
    d_log_std = z * z - 1.0
    d_logits = None
    if out.gbs_logits is not None:
        p = softmax(np.asarray(out.gbs_logits, dtype=float))
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, np.asarray(gbs)[..., None], 1.0, axis=-1)
        d_logits = onehot - p
    return d_mean, d_log_std, d_logits


def entropy_grads(out: PolicyOutput):
    mean = np.asarray(out.mean, dtype=float)
    log_std = np.broadcast_to(out.log_std, mean.shape)
    _, d_mean, d_corr = squash_correction(mean, log_std)
    d_log_std = 1.0 + d_corr
    d_logits = None
    if out.gbs_logits is not None:
        ls = log_softmax(np.asarray(out.gbs_logits, dtype=float))
        p = np.exp(ls)
        h = -(p * ls).sum(axis=-1, keepdims=True)
        d_logits = -p * (ls + h)
    return d_mean, d_log_std, d_logits
