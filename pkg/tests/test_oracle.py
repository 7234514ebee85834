import math

import numpy as np
import pytest
from scipy import stats

from inputdesign.model import LgssModel
from inputdesign.oracle import (
    dense_conditional,
    dense_joint,
    dense_loglik,
    exact_fisher_mc,
    exact_score_terms,
    exact_smoother_moments,
    kalman_filter,
    kalman_loglik,
    kalman_score,
)

THETA = np.array([0.8, 1.0])


def _data(T, seed, u=None):
    rng = np.random.default_rng(seed)
    u = rng.choice([-1.0, 1.0], size=T) if u is None else u
    return LgssModel().simulate(THETA, u, rng).outputs, u


def test_single_step_closed_form():
    y = np.array([0.37])
    var = 1.0 * (0.01 * (1 + 0.64)) + 0.01
    assert kalman_loglik(THETA, y, np.zeros(1)) == pytest.approx(stats.norm.logpdf(0.37, 0, math.sqrt(var)), abs=1e-12)


def test_loglik_matches_dense_gaussian():
    rng = np.random.default_rng(0)
    for _ in range(30):
        T = int(rng.integers(1, 7))
        theta = np.array([rng.uniform(-0.95, 0.95), rng.uniform(-2, 2)])
        u = rng.normal(size=T)
        y = rng.normal(size=T)
        assert abs(kalman_loglik(theta, y, u) - dense_loglik(theta, y, u)) < 1e-10

        mean, cov = dense_joint(theta, u)
        direct = stats.multivariate_normal(mean[T + 1:], cov[T + 1:, T + 1:]).logpdf(y)
        assert abs(dense_loglik(theta, y, u) - direct) < 1e-10


def test_loglik_sign_flip_invariance():
    y, u = _data(40, 1)
    assert kalman_loglik(THETA, y, u) == pytest.approx(kalman_loglik(THETA, -y, -u), abs=1e-10)


def test_score_matches_finite_differences():
    h = 1e-6
    for seed in range(5):
        y, u = _data(60, seed)
        s = kalman_score(THETA, y, u)
        fd = np.array([(kalman_loglik(THETA + h * e, y, u) - kalman_loglik(THETA - h * e, y, u)) / (2 * h)
                       for e in np.eye(2)])
        assert np.all(np.abs(s - fd) <= 1e-6 * np.maximum(np.abs(fd), 1.0))


def test_score_single_step():
    y, u = np.array([0.4]), np.array([1.0])
    phi, alpha = THETA
    # y_1 ~ N(alpha (phi * 0 + u_0), alpha^2 (phi^2 q + q) + r)
    q = r = 0.01

    def ll(p, a):
        return stats.norm.logpdf(0.4, a * 1.0, math.sqrt(a * a * (p * p * q + q) + r))

    h = 1e-6
    fd = [(ll(phi + h, alpha) - ll(phi - h, alpha)) / (2 * h), (ll(phi, alpha + h) - ll(phi, alpha - h)) / (2 * h)]
    np.testing.assert_allclose(kalman_score(THETA, y, u), fd, rtol=1e-7)


def test_score_has_zero_mean():
    S = np.array([kalman_score(THETA, *_data(50, 1000 + s)) for s in range(200)])
    assert np.all(np.abs(S.mean(axis=0)) < 3 * S.std(axis=0, ddof=1) / math.sqrt(200))


def test_fisher_identity_holds_exactly():
    y, u = _data(80, 3)
    np.testing.assert_allclose(exact_score_terms(THETA, y, u).total, kalman_score(THETA, y, u), rtol=1e-9, atol=1e-9)


def test_smoother_matches_dense_conditioning():
    for seed in range(5):
        y, u = _data(4, seed)
        sm = exact_smoother_moments(THETA, y, u)
        mean, cov = dense_conditional(THETA, y, u)
        np.testing.assert_allclose(sm.means, mean, atol=1e-10)
        np.testing.assert_allclose(sm.variances, np.diag(cov), atol=1e-10)
        np.testing.assert_allclose(sm.lag_cov, np.diag(cov, 1), atol=1e-10)


def test_smoother_properties():
    y, u = _data(1, 4)
    sm = exact_smoother_moments(THETA, y, u)
    assert sm.means[-1] == sm.filtered.filt_mean[-1] and sm.variances[-1] == sm.filtered.filt_var[-1]
    y, u = _data(100, 5)
    sm = exact_smoother_moments(THETA, y, u)
    assert np.all(sm.variances <= sm.filtered.filt_var + 1e-15)
    kf = kalman_filter(THETA, y, u)
    assert np.all(kf.pred_var > 0) and np.all(kf.filt_var > 0) and np.all(kf.innovation_var > 0)


def _gaussian_fisher(theta, u, h=1e-5):
    """Exact Fisher information of y ~ N(m(theta), S(theta)) by differentiating the dense moments."""
    T = len(u)

    def moments(th):
        mean, cov = dense_joint(th, u)
        return mean[T + 1:], cov[T + 1:, T + 1:]

    m0, S0 = moments(theta)
    Si = np.linalg.inv(S0)
    dm, dS = [], []
    for e in np.eye(2):
        mp, Sp = moments(theta + h * e)
        mm, Sm = moments(theta - h * e)
        dm.append((mp - mm) / (2 * h))
        dS.append((Sp - Sm) / (2 * h))
    F = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            F[i, j] = dm[i] @ Si @ dm[j] + 0.5 * np.trace(Si @ dS[i] @ Si @ dS[j])
    return F


def test_exact_fisher_mc_matches_gaussian_fisher():
    T = 20
    u = np.random.default_rng(6).choice([-1.0, 1.0], size=T)
    exact = _gaussian_fisher(THETA, u) / T
    est = exact_fisher_mc(THETA, lambda rng, n: u, T, 3000, np.random.default_rng(7)).matrix
    assert np.array_equal(est, est.T) and np.linalg.eigvalsh(est).min() > 0
    assert abs(np.linalg.slogdet(est)[1] - np.linalg.slogdet(exact)[1]) < 0.1
    np.testing.assert_allclose(est, exact, rtol=0.15, atol=0.05 * np.abs(exact).max())
