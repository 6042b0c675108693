import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavsim.agent.nn import AdamState
from uavsim.agent.policy import entropy_grads
from uavsim.agent.ppo import (
    ActorCritic,
    PpoConfig,
    Trajectory,
    clipped_surrogate,
    compute_gae,
    normalize_advantages,
    policy_loss_and_grads,
    ppo_update,
    value_loss_and_grads,
)


def _traj(rewards, values, dones):
    t = Trajectory()
    t.reward, t.value, t.done = list(rewards), list(values), list(dones)
    return t


def mc_advantages(rewards, values, dones, gamma, bootstrap):
    """Discounted return to the next episode end (or bootstrap) minus V."""
    n = len(rewards)
    out = np.zeros(n)
    for t in range(n):
        g, disc = 0.0, 1.0
        k = t
        while True:
            g += disc * rewards[k]
            if dones[k]:
                break
            disc *= gamma
            k += 1
            if k == n:
                g += disc * bootstrap
                break
        out[t] = g - values[t]
    return out


def test_lambda_zero_is_td_error():
    r, v, d = [1.0, -2.0, 0.5], [0.2, 0.4, -0.1], [False, False, True]
    adv, _ = compute_gae(_traj(r, v, d), 0.9, 0.0, bootstrap_value=3.0)
    want = [1.0 + 0.9 * 0.4 - 0.2, -2.0 + 0.9 * -0.1 - 0.4, 0.5 - -0.1]
    np.testing.assert_allclose(adv, want, rtol=0, atol=1e-15)


def test_lambda_one_hand_recursion():
    adv, ret = compute_gae(_traj([1.0, 1.0], [0.0, 0.0], [False, True]), 0.95, 1.0)
    # A1 = r1 = 1; A0 = r0 + gamma * lambda * A1 = 1 + 0.95
    np.testing.assert_allclose(adv, [1.95, 1.0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(adv, mc_advantages([1.0, 1.0], [0.0, 0.0], [False, True], 0.95, 0.0), atol=1e-12)
    np.testing.assert_allclose(ret, adv)


@pytest.mark.parametrize("seed", range(20))
def test_lambda_one_equals_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    n = 20
    r, v = rng.normal(size=n), rng.normal(size=n)
    d = rng.random(n) < 0.15
    boot = float(rng.normal())
    adv, ret = compute_gae(_traj(r, v, d), 0.95, 1.0, boot)
    np.testing.assert_allclose(adv, mc_advantages(r, v, d, 0.95, boot), rtol=0, atol=1e-10)
    np.testing.assert_allclose(ret, adv + v)


def test_empty_trajectory_raises():
    with pytest.raises(ValueError):
        compute_gae(Trajectory(), 0.95, 0.95)


@pytest.mark.parametrize(
    "rho, adv, eps, want",
    [
        (0.7, -2.0, 0.2, -1.6),
        (1.5, 1.0, 0.2, 1.2),
        (1.0, 3.0, 0.2, 3.0),
        (0.5, 2.0, 0.2, 1.0),
        (1.3, -1.0, 0.1, -1.3),
    ],
)
def test_clip_objective_hand_values(rho, adv, eps, want):
    obj, _ = clipped_surrogate(rho, adv, eps)
    assert obj == pytest.approx(want, abs=1e-12)


def test_clipped_branch_has_no_ratio_gradient():
    _, d = clipped_surrogate(1.5, 2.0, 0.2)
    assert d == 0.0
    _, d = clipped_surrogate(1.0, 2.0, 0.2)
    assert d == 2.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30), st.floats(-1e3, 1e3))
def test_normalization_ordering_is_shift_invariant(rewards, shift):
    a = np.asarray(rewards)
    if np.ptp(a) < 1e-3:
        return
    n0, n1 = normalize_advantages(a), normalize_advantages(a + shift)
    assert np.array_equal(np.argsort(n0, kind="stable"), np.argsort(n1, kind="stable")) or \
        np.allclose(n0, n1, atol=1e-6)


def _batch(rng, ac, n=12):
    obs = rng.uniform(-1, 1, size=(n, ac.obs_dim))
    out = ac.heads(obs)
    u = out.mean + np.exp(out.log_std) * rng.normal(size=(n, 3))
    gbs = rng.integers(0, ac.n_gbs, size=n)
    from uavsim.agent.policy import logprob_pre_tanh
    old = logprob_pre_tanh(out, u, gbs) + rng.normal(scale=0.3, size=n)
    return obs, u, gbs, old, rng.normal(size=n), rng.normal(size=n)


def _fd_loss(fn, params, h=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = fn()
            p[idx] = old - h
            dn = fn()
            p[idx] = old
            g[idx] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def test_ppo_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    ac = ActorCritic(5, 3, hidden=(6,), rng=rng)
    for w in ac.policy.weights:
        w *= 30  # move the heads away from zero so every term matters
    cfg = PpoConfig(entropy_coef=0.05)
    obs, u, gbs, old, adv, ret = _batch(rng, ac)
    _, grads, _ = policy_loss_and_grads(ac, obs, u, gbs, old, adv, cfg)

    def loss():
        return policy_loss_and_grads(ac, obs, u, gbs, old, adv, cfg)[0]

    for got, want in zip(grads, _fd_loss(loss, ac.policy_params())):
        np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-7)

    _, vgrads, _ = value_loss_and_grads(ac, obs, ret, cfg)
    fd = _fd_loss(lambda: value_loss_and_grads(ac, obs, ret, cfg)[0], ac.value_params())
    for got, want in zip(vgrads, fd):
        np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-7)


def test_identical_policy_ratio_one_gives_vanilla_gradient():
    rng = np.random.default_rng(1)
    ac = ActorCritic(4, 2, hidden=(5,), rng=rng)
    obs = rng.uniform(-1, 1, size=(8, 4))
    out = ac.heads(obs)
    u = out.mean + np.exp(out.log_std) * rng.normal(size=(8, 3))
    gbs = rng.integers(0, 2, size=8)
    from uavsim.agent.policy import logprob_pre_tanh, logprob_grads
    old = logprob_pre_tanh(out, u, gbs)
    adv = rng.normal(size=8)
    cfg = PpoConfig(entropy_coef=0.0)
    _, grads, stats = policy_loss_and_grads(ac, obs, u, gbs, old, adv, cfg)
    assert stats["clip_fraction"] == 0.0
    dm, dls, _ = logprob_grads(out, u, gbs)
    # vanilla policy gradient of -mean(A * logp) w.r.t. log_std
    np.testing.assert_allclose(grads[-1], -(adv[:, None] * dls).sum(axis=0) / 8, atol=1e-12)


def test_zero_advantage_without_entropy_gives_zero_policy_gradient():
    rng = np.random.default_rng(2)
    ac = ActorCritic(4, 3, hidden=(5,), rng=rng)
    obs, u, gbs, _, _, _ = _batch(rng, ac, n=6)
    from uavsim.agent.policy import logprob_pre_tanh
    old = logprob_pre_tanh(ac.heads(obs), u, gbs)
    cfg = PpoConfig(entropy_coef=0.0)
    _, grads, _ = policy_loss_and_grads(ac, obs, u, gbs, old, np.zeros(6), cfg)
    for g in grads:
        assert not np.any(g)
    cfg = PpoConfig(entropy_coef=0.1)
    _, grads, _ = policy_loss_and_grads(ac, obs, u, gbs, old, np.zeros(6), cfg)
    em, _, _ = entropy_grads(ac.heads(obs))
    assert np.any(grads[-1])


def test_ppo_update_aborts_on_non_finite_loss():
    rng = np.random.default_rng(3)
    ac = ActorCritic(4, 2, hidden=(5,), rng=rng)
    n = 8
    batch = {
        "obs": rng.uniform(-1, 1, size=(n, 4)),
        "pre_tanh": rng.normal(size=(n, 3)),
        "gbs": rng.integers(0, 2, size=n),
        "log_prob": np.zeros(n),
        "advantages": rng.normal(size=n),
        "returns": np.full(n, np.nan),
    }
    before = ac.snapshot()
    report = ppo_update(ac, batch, PpoConfig(), {}, rng)
    assert report.aborted and "non-finite" in report.diagnostics
    for a, b in zip(before, ac.snapshot()):
        np.testing.assert_array_equal(a, b)


def test_ppo_update_moves_parameters():
    rng = np.random.default_rng(4)
    ac = ActorCritic(4, 2, hidden=(5,), rng=rng)
    n = 16
    obs = rng.uniform(-1, 1, size=(n, 4))
    out = ac.heads(obs)
    from uavsim.agent.policy import logprob_pre_tanh
    u = out.mean + np.exp(out.log_std) * rng.normal(size=(n, 3))
    gbs = rng.integers(0, 2, size=n)
    batch = {"obs": obs, "pre_tanh": u, "gbs": gbs, "log_prob": logprob_pre_tanh(out, u, gbs),
             "advantages": rng.normal(size=n), "returns": rng.normal(size=n)}
    opt = {}
    report = ppo_update(ac, batch, PpoConfig(minibatch_size=8), opt, rng)
    assert not report.aborted
    assert isinstance(opt["policy"], AdamState) and opt["policy"].t == 4 * 2
