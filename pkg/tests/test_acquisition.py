import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from inputdesign.acquisition import (
    AcquisitionConfig,
    ei_closed_form,
    expected_improvement,
    incumbent,
    propose_next,
)
from inputdesign.inputs import ArDomain, MarkovDomain
from inputdesign.surrogate import GpPosterior, Hyperparameters, TrainingSet, posterior

from oracles import mc_expected_improvement


def test_ei_examples():
    assert ei_closed_form(1.01, 0.0, 1.0, 0.01) == pytest.approx(0.0, abs=1e-15)
    assert ei_closed_form(1.01, 1.0, 1.0, 0.01) == pytest.approx(0.39894, abs=1e-5)
    assert ei_closed_form(2.0, 0.0, 1.0, 0.01) == pytest.approx(0.99)


def test_ei_matches_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(30):
        mu, sigma, mu_max = rng.normal(), rng.uniform(0.05, 2), rng.normal()
        f = lambda h: max(0.0, h - mu_max - 0.01) * stats.norm.pdf(h, mu, sigma)
        ref, _ = integrate.quad(f, mu_max + 0.01, mu + 12 * sigma + abs(mu_max) + 1, epsabs=1e-13)
        assert ei_closed_form(mu, sigma, mu_max, 0.01) == pytest.approx(ref, rel=1e-7, abs=1e-12)


def test_ei_matches_monte_carlo_small():
    rng = np.random.default_rng(1)
    mu, sigma, mu_max = 0.3, 0.8, 0.5
    mc = mc_expected_improvement(mu, sigma, mu_max, 0.01, 10**6, rng)
    assert float(ei_closed_form(mu, sigma, mu_max, 0.01)) == pytest.approx(mc, rel=0.01)


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 20), st.floats(-50, 50), st.floats(0, 1))
def test_ei_nonnegative(mu, sigma, mu_max, xi):
    assert ei_closed_form(mu, sigma, mu_max, xi) >= 0


def test_ei_monotone():
    mus = np.linspace(-3, 3, 201)
    e = ei_closed_form(mus, 0.7, 0.0, 0.01)
    assert np.all(np.diff(e) >= -1e-15)
    sig = np.linspace(0, 4, 201)
    e = ei_closed_form(-0.5, sig, 0.0, 0.01)
    assert np.all(np.diff(e) >= -1e-15)


def _gp(points, values, noise=1e-4, ell=0.3):
    D = TrainingSet(np.atleast_2d(points), np.asarray(values, dtype=float))
    return GpPosterior(Hyperparameters(float(np.mean(values)), 1.0, (ell,) * D.dim, noise), D)


def test_incumbent_is_max_posterior_mean():
    gp = _gp([[0.2, 0.8], [0.6, 0.4], [0.9, 0.1]], [1.0, 3.0, 2.0])
    assert incumbent(gp) == pytest.approx(max(posterior(gp, x)[0] for x in gp.data.points))
    gp0 = GpPosterior(Hyperparameters(0.0, 1.0, (0.3,), 0.0), TrainingSet(np.array([[0.1], [0.7]]), np.array([1.0, 5.0])))
    assert incumbent(gp0) == pytest.approx(5.0, abs=1e-8)


def test_proposal_single_point_explores():
    dom = MarkovDomain((-1, 0, 1), 1)
    gp = _gp([dom.center()], [1.0])
    x = propose_next(gp, dom, AcquisitionConfig(), np.random.default_rng(2))
    assert dom.is_feasible(x, tol=1e-9)
    assert np.linalg.norm(x - dom.center()) > 1e-3


def test_proposal_matches_grid_argmax():
    dom = MarkovDomain((-1, 1), 1)
    gp = _gp([[0.1, 0.9], [0.5, 0.5], [0.8, 0.2]], [1.0, 1.4, 0.7], ell=0.2)
    grid = np.linspace(0, 1, 1001)
    G = np.column_stack([1 - grid, grid])
    mu_max = incumbent(gp)
    ei = expected_improvement(gp, mu_max, 0.01, G)
    cfg = AcquisitionConfig(walk_halfwidth=0.0)
    x = propose_next(gp, dom, cfg, np.random.default_rng(3), starts=G[::50])
    assert abs(x[1] - grid[np.argmax(ei)]) <= 2e-3


def test_proposal_prefers_uncertain_region():
    # equal means at both ends, one end far better constrained than the other
    dom = MarkovDomain((-1, 1), 1)
    X = [[1.0, 0.0], [0.98, 0.02], [0.96, 0.04], [0.5, 0.5], [0.0, 1.0]]
    gp = _gp(X, [0.0, 0.0, 0.0, 0.0, 0.0], noise=1e-2, ell=0.15)
    a, b = np.array([[0.9, 0.1]]), np.array([[0.25, 0.75]])
    mu_a, mu_b = gp.mean(a)[0], gp.mean(b)[0]
    assert abs(mu_a - mu_b) < 0.05
    x = propose_next(gp, dom, AcquisitionConfig(walk_halfwidth=0.0), np.random.default_rng(4))
    _, var_x, _ = gp.predict(x)
    _, var_a, _ = gp.predict(a)
    assert var_x[0] > var_a[0]


@pytest.mark.parametrize("dom", [MarkovDomain((-1, 0, 1), 2), ArDomain(order=2)], ids=["markov", "ar"])
def test_proposals_are_feasible_and_deterministic(dom):
    rng = np.random.default_rng(5)
    X = dom.sample(rng, size=6)
    gp = _gp(X, rng.normal(size=6), noise=0.05)
    for s in range(10):
        x = propose_next(gp, dom, AcquisitionConfig(restarts=4), np.random.default_rng(s))
        assert dom.is_feasible(x, tol=1e-9)
    a = propose_next(gp, dom, AcquisitionConfig(restarts=4), np.random.default_rng(77))
    b = propose_next(gp, dom, AcquisitionConfig(restarts=4), np.random.default_rng(77))
    assert np.array_equal(a, b)
