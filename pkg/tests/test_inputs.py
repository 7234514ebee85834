import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from inputdesign.errors import CapacityError, InvalidInputError
from inputdesign.inputs import (
    Alphabet,
    ArDomain,
    MarkovDomain,
    ar_burn_in,
    ar_generate,
    ar_is_stable,
    enumerate_extreme_points,
    generate_markov,
    project_weights,
    stationarity_residual,
)

from oracles import bfs_vertices, chi2_block_test, stationary_polytope

ALPHABETS = {2: (-1, 1), 3: (-1, 0, 1), 4: (-1, -1 / 3, 1 / 3, 1)}


def _as_set(points):
    return sorted(tuple(np.round(p, 9)) for p in points)


@pytest.mark.parametrize("q", [2, 3, 4])
@pytest.mark.parametrize("n", [1, 2])
def test_extreme_points_equal_lp_vertices(q, n):
    ours = enumerate_extreme_points(Alphabet(ALPHABETS[q]), n)
    ref = bfs_vertices(*stationary_polytope(q, n))
    assert _as_set(ours) == _as_set(ref)
    for p in ours:
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
        assert stationarity_residual(p, q, n) < 1e-12


def test_known_extreme_points():
    pts = enumerate_extreme_points(Alphabet((-1, 1)), 1)
    np.testing.assert_array_equal(np.vstack(pts), np.eye(2))
    pts = enumerate_extreme_points(Alphabet((-1, 1)), 2)
    # blocks: (-1,-1), (-1,1), (1,-1), (1,1)
    assert _as_set(pts) == _as_set([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0.5, 0.5, 0]])
    counts = {(2, 3): 6, (3, 3): 148}
    for (q, n), c in counts.items():
        assert len(enumerate_extreme_points(Alphabet(ALPHABETS[q]), n)) == c


def test_capacity_guard():
    with pytest.raises(CapacityError):
        enumerate_extreme_points(Alphabet((-1, -1 / 3, 1 / 3, 1)), 3)


def test_alphabet_validation():
    with pytest.raises(InvalidInputError):
        Alphabet((1.0,))
    with pytest.raises(InvalidInputError):
        Alphabet((1.0, 0.0))
    with pytest.raises(InvalidInputError):
        Alphabet((0.0, np.inf))


def test_compose_pmf():
    d = MarkovDomain((-1, 1), 1)
    np.testing.assert_allclose(d.compose_pmf([0.5, 0.5]), [0.5, 0.5])
    d2 = MarkovDomain((-1, 0, 1), 2)
    for j in range(d2.n_vertices):
        np.testing.assert_array_equal(d2.compose_pmf(np.eye(d2.n_vertices)[j]), d2.extreme_points[j])
    rng = np.random.default_rng(0)
    for w in d2.sample(rng, size=20):
        p = d2.compose_pmf(w)
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12 and stationarity_residual(p, 3, 2) < 1e-12


def test_projection_examples():
    np.testing.assert_allclose(project_weights([0.2, 0.8]), [0.2, 0.8])
    np.testing.assert_allclose(project_weights([-0.1, 0.5]), [0.0, 1.0])
    np.testing.assert_allclose(project_weights([0.0, 0.0, 0.0]), [1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(project_weights([0.5, 0.9], method="euclidean"), [0.3, 0.7])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8), st.sampled_from(["clamp", "euclidean"]))
def test_projection_is_feasible_and_idempotent(raw, method):
    p = project_weights(raw, method)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(project_weights(p, method), p, atol=1e-12)


def test_generate_markov_examples():
    a = Alphabet((-1, 1))
    rng = np.random.default_rng(1)
    np.testing.assert_array_equal(generate_markov(np.array([0.0, 1.0]), a, 1, 50, rng), 1.0)
    u = generate_markov(np.array([0.5, 0.5]), a, 1, 100_000, rng)
    assert abs(np.mean(u == 1) - 0.5) < 0.01
    cyc = generate_markov(np.array([0, 0.5, 0.5, 0]), a, 2, 200, rng)
    assert np.all(cyc[1:] == -cyc[:-1])


def test_generate_markov_respects_support():
    d = MarkovDomain((-1, 0, 1), 2)
    rng = np.random.default_rng(2)
    for j in range(d.n_vertices):
        p = d.extreme_points[j]
        u = d.generate(np.eye(d.n_vertices)[j], 2000, rng)
        pairs = np.searchsorted([-1, 0, 1], u[:-1]) * 3 + np.searchsorted([-1, 0, 1], u[1:])
        assert np.all(p[pairs] > 0)


@pytest.mark.parametrize("q", [2, 3])
def test_generate_markov_block_frequencies(q):
    d = MarkovDomain(ALPHABETS[q], 2)
    rng = np.random.default_rng(3 + q)
    w = d.sample(rng)
    u = d.generate(w, 100_000, rng)
    assert chi2_block_test(u, ALPHABETS[q], 2, d.compose_pmf(w)) > 0.01


def test_constant_vertices():
    d = MarkovDomain((-1, 0, 1), 2)
    for j in d.constant_vertices():
        u = d.generate(np.eye(d.n_vertices)[j], 30, np.random.default_rng(0))
        assert np.all(u == u[0])
    assert len(d.constant_vertices()) == 3


def test_ar_stability():
    assert ar_is_stable([-0.5])
    assert not ar_is_stable([-1.0])
    rng = np.random.default_rng(4)
    for _ in range(50):
        # product of stable second-order factors 1 + c1 q^-1 + c2 q^-2
        poly = np.array([1.0])
        for _ in range(3):
            r, ang = rng.uniform(0, 0.99), rng.uniform(0, np.pi)
            poly = np.convolve(poly, [1.0, -2 * r * np.cos(ang), r * r])
        assert ar_is_stable(poly[1:])


def test_ar_generate_moments():
    rng = np.random.default_rng(5)
    u = ar_generate([0.0], 0.7, 100_000, rng)
    assert np.std(u) == pytest.approx(0.7, rel=0.02)
    u = ar_generate([-0.9], 1.0, 100_000, rng)
    assert np.var(u) == pytest.approx(1 / (1 - 0.81), rel=0.05)
    assert np.corrcoef(u[:-1], u[1:])[0, 1] == pytest.approx(0.9, abs=0.02)


def test_ar_generate_burn_in_invariance():
    a = [-1.2, 0.5]
    burn = ar_burn_in(a)
    base = [ar_generate(a, 1.0, 200, np.random.default_rng([6, s]))[0] for s in range(50)]
    doubled = [ar_generate(a, 1.0, 200, np.random.default_rng([7, s]), burn_in=2 * burn)[0] for s in range(50)]
    assert stats.ks_2samp(base, doubled).pvalue > 0.01


def test_ar_domain():
    d = ArDomain(order=2)
    rng = np.random.default_rng(8)
    for x in d.sample(rng, size=50):
        assert d.is_feasible(x)
    x = d.project(np.array([-1.9, 0.95, 2.0]))
    assert d.is_feasible(x)
    assert not d.is_feasible(np.array([-1.0, 0.0, 0.5]))
    with pytest.raises(InvalidInputError):
        ArDomain(order=1, coeff_bounds=(0.5, 1.0))
