import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cyclemodal.exceptions import NumericalError
from cyclemodal.neural import (AdamState, MlpParams, adam_step, gradient_check, mlp_backward,
                               mlp_forward, mlp_init, sigmoid)


def test_init_shapes_and_glorot_bounds():
    p = mlp_init(2, 100, 2, "linear", seed=0)
    assert p.W1.shape == (100, 2) and p.b1.shape == (100,)
    assert p.W2.shape == (2, 100) and p.b2.shape == (2,)
    assert np.all(p.b1 == 0) and np.all(p.b2 == 0)
    assert np.abs(p.W1).max() <= np.sqrt(6 / 102)
    assert p.n_params == 100 * 3 + 2 * 101


def test_init_seeded():
    a, b, c = (mlp_init(3, 7, 2, seed=s).theta for s in (1, 1, 2))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_views_share_theta():
    p = mlp_init(2, 3, 1, seed=0)
    p.theta[:] = np.arange(p.n_params)
    assert p.W1[0, 0] == 0 and p.b2[0] == p.n_params - 1


def test_bad_sizes_rejected():
    with pytest.raises(ValueError):
        MlpParams(0, 3, 1)
    with pytest.raises(ValueError):
        MlpParams(2, 3, 1, activation="relu")
    with pytest.raises(ValueError):
        MlpParams(2, 3, 1, theta=np.zeros(3))


def test_zero_network_outputs():
    out, _ = mlp_forward(MlpParams(3, 4, 2), np.ones((5, 3)))
    assert np.all(out == 0)
    out, _ = mlp_forward(MlpParams(3, 4, 1, "sigmoid"), np.ones((5, 3)))
    assert np.all(out == 0.5)


def test_single_unit_hand_computed():
    p = MlpParams(1, 1, 1, "sigmoid")
    p.W1[:] = 0.7
    p.b1[:] = -0.2
    p.W2[:] = 1.5
    p.b2[:] = 0.3
    x = np.array([[0.4], [-1.3]])
    expect = 1 / (1 + np.exp(-(1.5 * np.tanh(0.7 * x - 0.2) + 0.3)))
    out, cache = mlp_forward(p, x)
    np.testing.assert_allclose(out, expect, rtol=0, atol=1e-12)
    np.testing.assert_allclose(cache.z, 1.5 * np.tanh(0.7 * x - 0.2) + 0.3, atol=1e-12)


def test_sigmoid_extremes():
    z = np.array([-800.0, 0.0, 800.0])
    np.testing.assert_array_equal(sigmoid(z), [0.0, 0.5, 1.0])


def test_wrong_input_width():
    with pytest.raises(ValueError):
        mlp_forward(MlpParams(3, 4, 2), np.ones((5, 2)))


def test_zero_upstream_gradient():
    p = mlp_init(3, 5, 2, seed=1)
    _, cache = mlp_forward(p, np.ones((4, 3)))
    g, gx = mlp_backward(p, cache, np.zeros((4, 2)))
    assert np.all(g == 0) and np.all(gx == 0)


def test_stale_cache_rejected():
    p = mlp_init(3, 5, 2, seed=1)
    _, cache = mlp_forward(p, np.ones((4, 3)))
    adam_step(AdamState.for_params(p), p, np.ones(p.n_params))
    with pytest.raises(ValueError, match="cache"):
        mlp_backward(p, cache, np.ones((4, 2)))


def test_linear_net_matches_least_squares_gradient():
    rng = np.random.default_rng(2)
    p = mlp_init(3, 4, 2, hidden_activation="identity", seed=3)
    p.b1[:] = rng.standard_normal(4)
    p.b2[:] = rng.standard_normal(2)
    X, Y = rng.standard_normal((50, 3)), rng.standard_normal((50, 2))
    out, cache = mlp_forward(p, X)
    R = out - Y                          # loss = 0.5 * ||X W1^T W2^T + b - Y||^2
    g, _ = mlp_backward(p, cache, R)
    gW1, gb1, gW2, gb2 = p.split(g)
    H = X @ p.W1.T + p.b1
    np.testing.assert_allclose(gW2, R.T @ H, rtol=1e-12)
    np.testing.assert_allclose(gb2, R.sum(0), rtol=1e-12)
    np.testing.assert_allclose(gW1, p.W2.T @ R.T @ X, rtol=1e-12)
    np.testing.assert_allclose(gb1, (R @ p.W2).sum(0), rtol=1e-12)


def _quadratic(p, X, Y):
    def loss_fn():
        out, cache = mlp_forward(p, X)
        R = out - Y
        return 0.5 * np.sum(R * R), mlp_backward(p, cache, R)[0]
    return loss_fn


def test_gradient_check_linear_quadratic():
    rng = np.random.default_rng(4)
    p = mlp_init(3, 4, 2, hidden_activation="identity", seed=5)
    X, Y = rng.standard_normal((20, 3)), rng.standard_normal((20, 2))
    assert gradient_check(p, _quadratic(p, X, Y)) < 1e-8


@pytest.mark.parametrize("activation", ["linear", "sigmoid"])
def test_gradient_check_tanh_nets(activation):
    rng = np.random.default_rng(6)
    p = mlp_init(3, 6, 2, activation, seed=7)
    X, Y = rng.standard_normal((20, 3)), rng.uniform(0, 1, (20, 2))
    assert gradient_check(p, _quadratic(p, X, Y)) < 1e-5


def test_gradient_check_catches_wrong_gradient():
    rng = np.random.default_rng(8)
    p = mlp_init(2, 3, 1, seed=9)
    X, Y = rng.standard_normal((10, 2)), rng.standard_normal((10, 1))
    good = _quadratic(p, X, Y)

    def bad():
        loss, g = good()
        return loss, 1.5 * g
    err = gradient_check(p, bad)
    assert np.isfinite(err) and err > 0.1


def test_adam_zero_gradient_keeps_params():
    p = mlp_init(2, 3, 1, seed=0)
    before = p.theta.copy()
    st_ = AdamState.for_params(p)
    adam_step(st_, p, np.zeros(p.n_params))
    assert st_.step == 1 and np.array_equal(p.theta, before)


def test_adam_first_step_is_lr_times_sign():
    p = mlp_init(2, 3, 1, seed=0)
    g = np.random.default_rng(1).standard_normal(p.n_params)
    before = p.theta.copy()
    adam_step(AdamState.for_params(p, lr=1e-3), p, g)
    np.testing.assert_allclose(before - p.theta, 1e-3 * np.sign(g), rtol=1e-6)


def test_adam_descends_scalar_quadratic():
    p = MlpParams(1, 1, 1, hidden_activation="identity")
    p.b2[:] = 3.0
    st_ = AdamState.for_params(p, lr=0.05)
    losses = []
    for _ in range(50):
        w = p.b2[0]
        losses.append(0.5 * w * w)
        g = np.zeros(p.n_params)
        g[-1] = w
        adam_step(st_, p, g)
    assert np.all(np.diff(losses) < 0)


def test_adam_rejects_non_finite():
    p = mlp_init(2, 3, 1, seed=0)
    g = np.zeros(p.n_params)
    g[4] = np.nan
    with pytest.raises(NumericalError, match="first at 4"):
        adam_step(AdamState.for_params(p), p, g)


@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 3), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_split_layout_round_trip(i, h, o, seed):
    p = mlp_init(i, h, o, seed=seed)
    q = MlpParams(**p.config(), theta=np.concatenate([a.ravel() for a in p.split(p.theta)]))
    assert np.array_equal(q.theta, p.theta)
    c = p.copy()
    c.theta[0] += 1
    assert c.theta[0] != p.theta[0]
