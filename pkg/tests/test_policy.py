import numpy as np
import pytest
from scipy import stats

from uavsim.agent.policy import (
    PolicyOutput,
    categorical_entropy,
    entropy_grads,
    logprob_grads,
    logprob_pre_tanh,
    policy_entropy,
    policy_logprob,
    policy_sample,
    softmax,
)


def _out(mean, log_std, logits):
    return PolicyOutput(np.asarray(mean, float), np.asarray(log_std, float),
                        None if logits is None else np.asarray(logits, float))


def test_vanishing_std_gives_tanh_mean():
    out = _out([[0.3, -1.2, 2.0]], [-40.0] * 3, None)
    action, _ = policy_sample(out, np.random.default_rng(0))
    np.testing.assert_allclose(action.delta[0], np.tanh([0.3, -1.2, 2.0]), atol=1e-12)


def test_uniform_logits_sample_uniformly():
    rng = np.random.default_rng(7)
    out = _out(np.zeros((10_000, 3)), np.zeros(3), np.zeros((10_000, 4)))
    action, _ = policy_sample(out, rng)
    freq = np.bincount(action.gbs, minlength=4) / 10_000
    assert np.all(np.abs(freq - 0.25) <= 0.02)


def test_sampling_frequencies_pass_chi_square():
    rng = np.random.default_rng(3)
    logits = np.array([1.0, 0.0, -0.5, 2.0])
    n = 20_000
    action, _ = policy_sample(_out(np.zeros((n, 3)), np.zeros(3), np.tile(logits, (n, 1))), rng)
    counts = np.bincount(action.gbs, minlength=4)
    p = softmax(logits)
    assert abs(p.sum() - 1.0) < 1e-9
    assert stats.chisquare(counts, n * p).pvalue > 1e-3


def test_logprob_matches_sampling_logprob():
    rng = np.random.default_rng(11)
    out = _out(rng.normal(size=(50, 3)), [-0.3, 0.1, -1.0], rng.normal(size=(50, 5)))
    action, lp = policy_sample(out, rng)
    again = policy_logprob(out, (action.delta, action.gbs))
    np.testing.assert_allclose(again, lp, rtol=0, atol=1e-9)


def test_categorical_entropy_limits():
    assert categorical_entropy(np.array([0.0, -1e4, -1e4])) == pytest.approx(0.0, abs=1e-12)
    assert categorical_entropy(np.zeros(6)) == pytest.approx(np.log(6), abs=1e-12)


def test_entropy_matches_monte_carlo():
    rng = np.random.default_rng(5)
    n = 100_000
    mean = np.tile([0.4, -0.8, 0.0], (n, 1))
    log_std = np.array([-0.2, 0.3, -0.6])
    logits = np.tile([0.5, -1.0, 0.2, 1.5], (n, 1))
    out = _out(mean, log_std, logits)
    _, lp = policy_sample(out, rng)
    h = policy_entropy(_out(mean[:1], log_std, logits[:1]))[0]
    assert abs(-lp.mean() - h) <= 0.02 * abs(h)


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        dn = f()
        x[idx] = old
        g[idx] = (up - dn) / (2 * h)
    return g


def test_logprob_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    mean, log_std, logits = rng.normal(size=(4, 3)), rng.normal(size=3) * 0.3, rng.normal(size=(4, 5))
    u = rng.normal(size=(4, 3))
    gbs = rng.integers(0, 5, size=4)

    def total():
        return logprob_pre_tanh(_out(mean, log_std, logits), u, gbs).sum()

    dm, dls, dlg = logprob_grads(_out(mean, log_std, logits), u, gbs)
    np.testing.assert_allclose(dm, _fd(total, mean), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(dls.sum(axis=0), _fd(total, log_std), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(dlg, _fd(total, logits), rtol=1e-4, atol=1e-7)


def test_entropy_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    mean, log_std, logits = rng.normal(size=(3, 3)), rng.normal(size=3) * 0.5, rng.normal(size=(3, 4))

    def total():
        return policy_entropy(_out(mean, log_std, logits)).sum()

    dm, dls, dlg = entropy_grads(_out(mean, log_std, logits))
    np.testing.assert_allclose(dm, _fd(total, mean), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(dls.sum(axis=0), _fd(total, log_std), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(dlg, _fd(total, logits), rtol=1e-4, atol=1e-7)
