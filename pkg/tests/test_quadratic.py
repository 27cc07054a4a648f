import numpy as np
import pytest
from hypothesis import given, strategies as st

from stream_ttt.models import (QuadModelSpec, QuadraticModel, quad_main_grad, quad_main_loss,
                               quad_ssl_grad, ssl_noise)
from stream_ttt.streamgen import Frame


def central_diff(fn, theta, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return g


def random_spec(rng, d, sigma=0.0):
    return QuadModelSpec(rng.uniform(0.2, 3.0), rng.normal(size=(d, d)), sigma)


def test_gradient_zero_at_optimum():
    rng = np.random.default_rng(0)
    spec = random_spec(rng, 5)
    x = rng.normal(size=5)
    np.testing.assert_allclose(quad_main_grad(spec, spec.W @ x, x), 0.0, atol=1e-15)


def test_direct_evaluation():
    spec = QuadModelSpec(1.0, np.eye(2))
    np.testing.assert_array_equal(quad_main_grad(spec, [1.0, 0.0], np.zeros(2)), [1.0, 0.0])
    assert quad_main_loss(spec, [1.0, 0.0], np.zeros(2)) == 0.5


@given(seed=st.integers(0, 10**6), d=st.integers(1, 8))
def test_main_gradient_matches_finite_differences(seed, d):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, d)
    x, theta = rng.normal(size=d), rng.normal(size=d)
    num = central_diff(lambda th: quad_main_loss(spec, th, x), theta)
    ana = quad_main_grad(spec, theta, x)
    np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-8)


@given(seed=st.integers(0, 10**6), d=st.integers(1, 8))
def test_strong_convexity_witness(seed, d):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, d)
    x, a, b = rng.normal(size=(3, d)) * 3
    lhs = quad_main_loss(spec, b, x)
    rhs = (quad_main_loss(spec, a, x) + quad_main_grad(spec, a, x) @ (b - a)
           + 0.5 * spec.alpha * np.sum((b - a) ** 2))
    assert lhs >= rhs - 1e-9 * max(1.0, abs(lhs))


@given(seed=st.integers(0, 10**6), d=st.integers(1, 6))
def test_gradient_lipschitz_in_x_with_beta(seed, d):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, d)
    theta, x1, x2 = rng.normal(size=(3, d))
    diff = np.linalg.norm(quad_main_grad(spec, theta, x1) - quad_main_grad(spec, theta, x2))
    assert diff <= spec.beta() * np.linalg.norm(x1 - x2) * (1 + 1e-12)


def test_isotropic_realizes_beta():
    spec = QuadModelSpec.isotropic(alpha=2.0, beta=3.0, d=4)
    assert spec.beta() == pytest.approx(3.0, rel=1e-15)


def test_sigma_zero_ssl_equals_main():
    rng = np.random.default_rng(1)
    spec = random_spec(rng, 4, sigma=0.0)
    x, theta = rng.normal(size=(2, 4))
    np.testing.assert_array_equal(quad_ssl_grad(spec, theta, Frame(x, 3), 9),
                                  quad_main_grad(spec, theta, x))


def test_ssl_noise_is_pure_function_of_index_and_seed():
    rng = np.random.default_rng(2)
    spec = random_spec(rng, 6, sigma=1.3)
    x, theta = rng.normal(size=(2, 6))
    a = quad_ssl_grad(spec, theta, Frame(x, 17), 4)
    b = quad_ssl_grad(spec, theta, Frame(x, 17), 4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, quad_ssl_grad(spec, theta, Frame(x, 18), 4))
    assert not np.array_equal(a, quad_ssl_grad(spec, theta, Frame(x, 17), 5))


def test_noise_second_moment_monte_carlo():
    d, n = 8, 100_000
    sq = np.array([np.sum(ssl_noise(t, 123, d, 1.0) ** 2) for t in range(1, n + 1)])
    assert abs(sq.mean() - 1.0) <= 0.02


def test_noise_is_zero_mean_and_isotropic():
    d, n = 3, 20_000
    D = np.stack([ssl_noise(t, 7, d, 2.0) for t in range(n)])
    se = np.sqrt(4.0 / d / n)
    assert np.all(np.abs(D.mean(0)) < 4 * se)
    cov = np.cov(D.T)
    np.testing.assert_allclose(np.diag(cov), 4.0 / d, rtol=0.05)
    assert np.all(np.abs(cov[~np.eye(d, dtype=bool)]) < 0.05)


def test_rejects_bad_inputs():
    spec = QuadModelSpec(1.0, np.eye(2))
    with pytest.raises(ValueError):
        quad_main_grad(spec, [np.nan, 0.0], np.zeros(2))
    with pytest.raises(ValueError):
        quad_main_grad(spec, [0.0, 0.0, 0.0], np.zeros(2))
    with pytest.raises(ValueError):
        QuadModelSpec(0.0, np.eye(2))
    with pytest.raises(ValueError):
        QuadModelSpec(1.0, np.ones((2, 3)))


def test_adapter_inner_gradient_is_window_average():
    rng = np.random.default_rng(3)
    spec = random_spec(rng, 3, sigma=0.7)
    model = QuadraticModel(spec)
    state = model.init_state(0)
    X = rng.normal(size=(5, 3))
    ts = np.arange(10, 15)
    _, gf, gg = model.inner_grads(state, X, ts, "masked-recon", None, 42)
    each = [quad_ssl_grad(spec, state.f, Frame(x, t), 42) for x, t in zip(X, ts)]
    np.testing.assert_allclose(gf, np.mean(each, axis=0), atol=1e-14)
    assert gg.size == 0
    with pytest.raises(ValueError):
        model.inner_grads(state, X, ts, "entropy", None, 42)


def test_adapter_evaluation_is_excess_risk():
    spec = QuadModelSpec(2.0, np.eye(2))
    model = QuadraticModel(spec)
    from stream_ttt.models import ModelState

    st_ = ModelState(np.array([1.0, 1.0]), np.zeros(0), np.zeros(0))
    ev = model.evaluate_batch(st_, np.array([[1.0, 1.0], [0.0, 1.0]]), None, [1, 2], 0, 0)
    np.testing.assert_allclose(ev.pred_error, [0.0, 1.0])
    assert ev.iou is None
