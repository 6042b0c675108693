import numpy as np
import pytest

from uavsim.agent.nn import AdamConfig, AdamState, Mlp, adam_update, backprop, mlp_forward


def _oracle_forward(net, x):
    # independent re-implementation with explicit loops over units
    h = list(x)
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += h[i] * w[i, j]
            out.append(np.tanh(s) if li < len(net.weights) - 1 else s)
        h = out
    return np.array(h)


def _fd_grads(net, x, g, h=1e-5):
    grads = []
    for p in net.params():
        gp = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = float(np.sum(mlp_forward(net, x) * g))
            p[idx] = old - h
            dn = float(np.sum(mlp_forward(net, x) * g))
            p[idx] = old
            gp[idx] = (up - dn) / (2 * h)
        grads.append(gp)
    return grads


def test_zero_net_gives_zero_output():
    net = Mlp.zeros([4, 8, 2])
    assert np.array_equal(mlp_forward(net, np.ones(4)), np.zeros(2))


def test_identity_linear_layer():
    net = Mlp([3, 3], [np.eye(3)], [np.zeros(3)])
    x = np.array([0.3, -2.0, 5.0])
    assert np.array_equal(mlp_forward(net, x), x)


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(0)
    net = Mlp.init([4, 8, 2], rng)
    for b in net.biases:
        b += rng.normal(size=b.shape)
    x = rng.normal(size=4)
    np.testing.assert_allclose(mlp_forward(net, x), _oracle_forward(net, x), rtol=0, atol=1e-12)


def test_shape_mismatch_raises():
    net = Mlp.zeros([4, 2])
    with pytest.raises(ValueError):
        mlp_forward(net, np.ones(5))
    with pytest.raises(ValueError):
        backprop(net, np.ones(4), np.ones(3))


@pytest.mark.parametrize("seed", range(5))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = Mlp.init([3, 5, 4, 2], rng)
    x = rng.normal(size=(6, 3))
    g = rng.normal(size=(6, 2))
    for got, want in zip(backprop(net, x, g), _fd_grads(net, x, g)):
        np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-8)


def test_zero_output_grad_gives_zero_gradients():
    rng = np.random.default_rng(1)
    net = Mlp.init([3, 4, 2], rng)
    for gr in backprop(net, rng.normal(size=3), np.zeros(2)):
        assert not gr.any()


def test_linear_gradient_is_input():
    net = Mlp([3, 1], [np.array([[0.5], [-1.0], [2.0]])], [np.zeros(1)])
    x = np.array([1.5, -0.25, 4.0])
    gw, gb = backprop(net, x, np.ones(1))
    np.testing.assert_array_equal(gw[:, 0], x)
    assert gb[0] == 1.0


def test_adam_constant_gradient_step_tends_to_lr_sign():
    cfg = AdamConfig(lr=1e-3)
    p = [np.array([0.0, 0.0])]
    state = AdamState.like(p)
    g = [np.array([0.7, -3.0])]
    prev = p[0].copy()
    for _ in range(2000):
        prev = p[0].copy()
        adam_update(p, g, state, cfg)
    step = p[0] - prev
    # bias-corrected moments equal g and g^2 exactly, so the step is lr*g/(|g|+eps)
    np.testing.assert_allclose(step, -cfg.lr * np.sign(g[0]), rtol=1e-6)


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    state = AdamState.like(p)
    adam_update(p, [np.zeros(2)], state, AdamConfig())
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_symmetric_tensors_update_identically():
    a, b = np.array([0.3, 0.1]), np.array([0.3, 0.1])
    state = AdamState.like([a, b])
    for k in range(10):
        g = np.array([np.sin(k), np.cos(k)])
        adam_update([a, b], [g, g.copy()], state, AdamConfig())
    np.testing.assert_array_equal(a, b)
