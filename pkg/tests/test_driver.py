import dataclasses

import numpy as np
import pytest

import inputdesign.driver as drv
from inputdesign.driver import GpoConfig, evaluate_objective, final_design, run_gpo, stream_rng
from inputdesign.errors import DriverAbort, EvaluationError, InvalidInputError, SingularInformationError
from inputdesign.inputs import MarkovDomain
from inputdesign.model import LgssModel
from inputdesign.surrogate import GpPosterior, Hyperparameters, TrainingSet

THETA = (0.8, 1.0)
TINY = GpoConfig(K=6, warmup=4, T=40, N=100, M=20, final_replicates=2, gp_restarts=2)


@pytest.fixture(scope="module")
def tiny_run():
    return run_gpo(LgssModel(), THETA, MarkovDomain((-1, 1), 1), TINY, seed=11)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        GpoConfig(warmup=1)
    with pytest.raises(InvalidInputError):
        GpoConfig(N=10, N_limit=11)
    with pytest.raises(InvalidInputError):
        GpoConfig(K=-1)
    assert GpoConfig().smoother.resolved_limit(2500) == 50


def test_streams_are_reproducible_and_distinct():
    a = stream_rng(5, "evaluate", 3).random(4)
    assert np.array_equal(a, stream_rng(5, "evaluate", 3).random(4))
    assert not np.array_equal(a, stream_rng(5, "evaluate", 4).random(4))
    assert not np.array_equal(a, stream_rng(5, "warmup", 3).random(4))
    assert not np.array_equal(a, stream_rng(6, "evaluate", 3).random(4))


def test_evaluate_objective_deterministic_and_validated():
    dom = MarkovDomain((-1, 1), 1)
    cfg = dataclasses.replace(TINY, replicates=3)
    a = evaluate_objective(LgssModel(), THETA, [0.3, 0.7], dom, cfg, stream_rng(0, "evaluate", 0))
    b = evaluate_objective(LgssModel(), THETA, [0.3, 0.7], dom, cfg, stream_rng(0, "evaluate", 0))
    assert a == b and len(a.replicate_values) == 3
    assert a.value == pytest.approx(np.mean(a.replicate_values))
    with pytest.raises(InvalidInputError):
        evaluate_objective(LgssModel(), THETA, [0.3, 0.8], dom, cfg, stream_rng(0, "evaluate", 0))


def test_evaluation_errors_are_tagged(monkeypatch):
    def boom(*a, **k):
        raise SingularInformationError("singular")

    monkeypatch.setattr(drv, "estimate_information", boom)
    with pytest.raises(EvaluationError) as exc:
        evaluate_objective(LgssModel(), THETA, [0.5, 0.5], MarkovDomain((-1, 1), 1), TINY, stream_rng(0, "evaluate", 0))
    assert list(exc.value.design) == [0.5, 0.5]


def test_trace_invariants(tiny_run):
    r = tiny_run
    dom = MarkovDomain((-1, 1), 1)
    assert len(r.trace) == TINY.warmup + TINY.K - len(r.failures)
    ks = [rec.k for rec in r.trace]
    assert ks == sorted(set(ks))
    best = [rec.best_so_far for rec in r.trace]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    for rec in r.trace:
        assert dom.is_feasible(np.array(rec.design), tol=1e-9)
    assert dom.is_feasible(r.best_design, tol=1e-9)
    assert [rec.phase for rec in r.trace[: TINY.warmup]] == ["warmup"] * TINY.warmup
    assert len(r.final_objective_replicates) == TINY.final_replicates


def test_rerun_is_bit_identical(tiny_run):
    again = run_gpo(LgssModel(), THETA, MarkovDomain((-1, 1), 1), TINY, seed=11)
    strip = lambda tr: [repr(dataclasses.replace(rec, wall_ms=0.0)) for rec in tr]
    assert strip(again.trace) == strip(tiny_run.trace)
    assert np.array_equal(again.best_design, tiny_run.best_design)
    assert again.final_objective == tiny_run.final_objective


def test_k0_returns_best_warmup_point():
    cfg = dataclasses.replace(TINY, K=0)
    r = run_gpo(LgssModel(), THETA, MarkovDomain((-1, 1), 1), cfg, seed=3)
    gp = GpPosterior(r.hyperparameters, r.data)
    means = gp.mean(r.data.points)
    assert len(r.trace) == cfg.warmup
    assert gp.mean(r.best_design[None, :])[0] >= means.max() - 1e-9


def test_abort_when_too_many_failures(monkeypatch):
    def fail(model, theta0, design, domain, cfg, rng):
        raise EvaluationError(design, RuntimeError("synthetic"))

    monkeypatch.setattr(drv, "evaluate_objective", fail)
    with pytest.raises(DriverAbort):
        run_gpo(LgssModel(), THETA, MarkovDomain((-1, 1), 1), TINY, seed=0)


def test_failures_are_skipped(monkeypatch):
    real = drv.evaluate_objective
    calls = {"n": 0}

    def flaky(model, theta0, design, domain, cfg, rng):
        calls["n"] += 1
        if calls["n"] == 6:
            raise EvaluationError(design, RuntimeError("synthetic"))
        return real(model, theta0, design, domain, cfg, rng)

    monkeypatch.setattr(drv, "evaluate_objective", flaky)
    r = run_gpo(LgssModel(), THETA, MarkovDomain((-1, 1), 1), TINY, seed=0)
    assert len(r.failures) == 1
    assert len(r.trace) == TINY.warmup + TINY.K - 1


def test_final_design_single_point():
    dom = MarkovDomain((-1, 0, 1), 1)
    D = TrainingSet(np.array([[0.2, 0.3, 0.5]]), np.array([1.0]))
    gp = GpPosterior(Hyperparameters(1.0, 1.0, (0.5,) * 3, 0.1), D)
    np.testing.assert_allclose(final_design(gp, dom), [0.2, 0.3, 0.5], atol=1e-3)


def test_final_design_interpolation_picks_best_observed():
    dom = MarkovDomain((-1, 1), 1)
    X = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    y = np.array([0.0, 2.0, 1.0])
    gp = GpPosterior(Hyperparameters(0.0, 1.0, (0.05, 0.05), 0.0), TrainingSet(X, y))
    np.testing.assert_allclose(final_design(gp, dom), [0.5, 0.5], atol=1e-6)


def test_final_design_matches_grid_search():
    dom = MarkovDomain((-1, 1), 1)
    rng = np.random.default_rng(2)
    p = rng.uniform(0, 1, 8)
    X = np.column_stack([1 - p, p])
    gp = GpPosterior(Hyperparameters(0.0, 1.0, (0.3, 0.3), 0.05), TrainingSet(X, np.sin(5 * p)))
    grid = np.linspace(0, 1, 2001)
    mu = gp.mean(np.column_stack([1 - grid, grid]))
    x = final_design(gp, dom)
    assert abs(x[1] - grid[np.argmax(mu)]) <= 1e-3


def test_proposals_concentrate_near_incumbent():
    cfg = GpoConfig(K=20, warmup=10, T=100, N=200, M=50, final_replicates=1, gp_restarts=2)
    r = run_gpo(LgssModel(), THETA, MarkovDomain((-1, 1), 1), cfg, seed=5)
    gpo = [rec for rec in r.trace if rec.phase == "gpo"]
    close = [rec.h_hat >= rec.mu_max - 2 * rec.pred_std for rec in gpo]
    assert np.mean(close) > 0.8
