import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpexplore import gp
from gpexplore.gp import Hyperparameters, KernelConfig

from oracles import dense_gp, matern32


def random_problem(seed, n=20, family="matern32"):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 2))
    y = np.sin(X[:, 0]) + 0.3 * X[:, 1] + 0.1 * rng.normal(size=n)
    params = Hyperparameters(KernelConfig(family, rng.uniform(0.3, 2.0), rng.uniform(0.5, 2.0)),
                             rng.uniform(0.01, 0.3))
    return X, y, params


def sample_prior(kappa, seed, n=60, noise=1e-4):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(n, 2))
    K = gp.kernel_matrix(X, X, KernelConfig("matern32", kappa, 1.0)) + noise * np.eye(n)
    return X, np.linalg.cholesky(K) @ rng.normal(size=n)


class TestKernel:
    def test_zero_distance(self):
        assert gp.kernel_eval((1.0, 2.0), (1.0, 2.0), KernelConfig()) == 1.0

    def test_matern32_closed_form(self):
        k = gp.kernel_eval((0.0, 0.0), (1.0, 0.0), KernelConfig("matern32", 1.0, 1.0))
        assert k == pytest.approx((1 + math.sqrt(3)) * math.exp(-math.sqrt(3)), abs=1e-12)
        assert k == pytest.approx(0.4833577245965, abs=1e-12)

    def test_matern52_closed_form(self):
        s = math.sqrt(5) * 0.7 / 1.3
        k = gp.kernel_eval((0.0, 0.0), (0.0, 0.7), KernelConfig("matern52", 1.3, 2.0))
        assert k == pytest.approx(2.0 * (1 + s + s * s / 3) * math.exp(-s), rel=1e-12)

    @given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
    def test_symmetric(self, a, b):
        cfg = KernelConfig("matern52", 0.7, 1.3)
        assert gp.kernel_eval(a, b, cfg) == gp.kernel_eval(b, a, cfg)

    def test_matrix_symmetric(self):
        X = np.random.default_rng(0).normal(size=(30, 2))
        K = gp.kernel_matrix(X, X, KernelConfig())
        assert np.max(np.abs(K - K.T)) < 1e-12

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            KernelConfig("rbf")
        with pytest.raises(ValueError):
            KernelConfig(length_scale=0.0)


class TestFit:
    def test_single_point(self):
        m = gp.fit([[0.0, 0.0]], [2.0], KernelConfig(), 0.5)
        pred = gp.predict(m, [[0.0, 0.0]])
        assert pred.mean[0] == pytest.approx(2.0 * 1.0 / 1.5)

    def test_duplicate_points_jitter(self):
        m = gp.fit([[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0], KernelConfig(), 0.0)
        assert m.jitter > 0
        assert np.isfinite(gp.predict(m, [[0.1, 0.0]]).mean).all()

    def test_fifty_random_points_factorize(self):
        X = np.random.default_rng(1).uniform(0, 5, size=(50, 2))
        m = gp.fit(X, np.ones(50), KernelConfig(), 0.01)
        K = gp.kernel_matrix(X, X, KernelConfig()) + (0.01 + m.jitter) * np.eye(50)
        rel = np.linalg.norm(m.L @ m.L.T - K) / np.linalg.norm(K)
        assert rel < 1e-8

    def test_cap(self):
        with pytest.raises(ValueError):
            gp.fit(np.zeros((5, 2)), np.zeros(5), KernelConfig(), 0.1, max_points=4)

    def test_empty(self):
        with pytest.raises(ValueError):
            gp.fit(np.zeros((0, 2)), np.zeros(0), KernelConfig(), 0.1)


class TestPredict:
    def test_far_query_reverts_to_prior(self):
        m = gp.fit([[0.0, 0.0]], [1.0], KernelConfig("matern32", 0.5, 2.0), 0.01)
        pred = gp.predict(m, [[100.0, 0.0]])
        assert abs(pred.mean[0]) < 1e-12
        assert pred.variance[0] == pytest.approx(2.0)

    def test_interpolates_noise_free(self):
        X, y, _ = random_problem(3, 15)
        m = gp.fit(X, y, KernelConfig("matern32", 1.0, 1.0), 1e-10)
        assert np.max(np.abs(gp.predict(m, X).mean - y)) < 1e-6

    def test_matches_dense_oracle(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        y = np.array([0.5, -1.0, 2.0])
        Xs = np.array([[0.5, 0.0], [1.5, 0.0], [1.0, 0.3]])
        m = gp.fit(X, y, KernelConfig("matern32", 0.8, 1.5), 0.05)
        pred = gp.predict(m, Xs, variance_floor=0.0)
        mean, var = dense_gp(X, y, Xs, matern32(0.8, 1.5), 0.05)
        assert np.allclose(pred.mean, mean, atol=1e-8)
        assert np.allclose(pred.variance, var, atol=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_variance_at_training_below_prior(self, seed):
        X, y, params = random_problem(seed, 12)
        m = gp.fit(X, y, params.kernel, params.noise_variance)
        assert np.all(gp.predict(m, X).variance <= params.kernel.signal_variance + 1e-9)

    def test_permutation_invariant(self):
        X, y, params = random_problem(4, 25)
        Xs = np.random.default_rng(5).uniform(-2, 2, size=(10, 2))
        perm = np.random.default_rng(6).permutation(25)
        a = gp.predict(gp.fit(X, y, params.kernel, params.noise_variance), Xs)
        b = gp.predict(gp.fit(X[perm], y[perm], params.kernel, params.noise_variance), Xs)
        assert np.allclose(a.mean, b.mean, atol=1e-10)
        assert np.allclose(a.variance, b.variance, atol=1e-10)

    def test_variance_floor(self):
        m = gp.fit([[0.0, 0.0]], [1.0], KernelConfig(), 0.0)
        assert gp.predict(m, [[0.0, 0.0]]).variance[0] == gp.VARIANCE_FLOOR

    def test_chunked_equals_single_pass(self):
        X, y, params = random_problem(7, 30)
        Xs = np.random.default_rng(8).uniform(-2, 2, size=(100, 2))
        m = gp.fit(X, y, params.kernel, params.noise_variance)
        a, b = gp.predict(m, Xs), gp.predict(m, Xs, chunk=7)
        assert np.allclose(a.mean, b.mean, atol=1e-12)


def fd_gradient(params, X, y, h=1e-5):
    theta = params.to_log()
    g = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        hi = gp.nlml(Hyperparameters.from_log(theta + e, params.kernel.family), X, y)[0]
        lo = gp.nlml(Hyperparameters.from_log(theta - e, params.kernel.family), X, y)[0]
        g[i] = (hi - lo) / (2 * h)
    return g


class TestNLML:
    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("family", ["matern32", "matern52"])
    def test_gradient_matches_finite_differences(self, seed, family):
        X, y, params = random_problem(seed, 20, family)
        _, grad = gp.nlml(params, X, y)
        fd = fd_gradient(params, X, y)
        assert np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-3)) < 1e-4

    def test_scalar_gaussian(self):
        params = Hyperparameters(KernelConfig("matern32", 1.0, 1.0), 0.0)
        value, _ = gp.nlml(params, [[0.0, 0.0]], [1.0])
        assert value == pytest.approx(0.5 + 0.5 * math.log(2 * math.pi), abs=1e-9)

    def test_longer_scale_fits_smooth_data(self):
        wins = 0
        for seed in range(20):
            X, y = sample_prior(3.0, seed)
            short = gp.nlml(Hyperparameters(KernelConfig("matern32", 0.75, 1.0), 1e-3), X, y)[0]
            long = gp.nlml(Hyperparameters(KernelConfig("matern32", 1.5, 1.0), 1e-3), X, y)[0]
            wins += long < short
        assert wins >= 16


class TestOptimize:
    def test_monotone(self):
        for seed in range(5):
            X, y, params = random_problem(seed, 20)
            best = gp.optimize_hyperparameters(X, y, params)
            assert gp.nlml(best, X, y)[0] <= gp.nlml(params, X, y)[0] + 1e-12

    def test_optimal_init_is_stable(self):
        X, y, params = random_problem(11, 20)
        best = gp.optimize_hyperparameters(X, y, params)
        again = gp.optimize_hyperparameters(X, y, best)
        assert gp.nlml(again, X, y)[0] == pytest.approx(gp.nlml(best, X, y)[0], abs=1e-9)

    def test_recovers_length_scale(self):
        found = []
        for seed in range(10):
            X, y = sample_prior(2.0, seed, n=120, noise=1e-3)
            init = Hyperparameters(KernelConfig("matern32", 0.7, 0.5), 0.05)
            found.append(gp.optimize_hyperparameters(X, y, init).kernel.length_scale)
        assert 2.0 / 1.5 <= np.median(found) <= 2.0 * 1.5

    def test_persistence_round_trip(self, tmp_path):
        params = Hyperparameters(KernelConfig("matern52", 0.123456789, 1.5), 0.0123)
        gp.write_hyperparameters(tmp_path / "h.txt", params)
        assert gp.read_hyperparameters(tmp_path / "h.txt") == params
