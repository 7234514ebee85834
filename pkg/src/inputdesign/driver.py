"""Gaussian-process optimization of the input design, end to end.

Random streams are derived from one master seed by a counter scheme:
stream ``(s, k)`` is ``SeedSequence(master, spawn_key=(s, k))`` where ``s``
names the purpose (see ``STREAMS``) and ``k`` is the evaluation index, so any
single evaluation can be reproduced in isolation.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionConfig, incumbent, maximize_projected, propose_next
from .errors import (
    BoundViolationError,
    DegenerateFilterError,
    DriverAbort,
    EvaluationError,
    FittingError,
    InvalidInputError,
    SingularInformationError,
)
from .model import GaussianSSM
from .smc import SmootherConfig, estimate_information, objective_logdet
from .surrogate import GpPosterior, HyperBounds, Hyperparameters, TrainingSet, fit_hyperparameters

log = logging.getLogger(__name__)

STREAMS = {"warmup": 0, "evaluate": 1, "fit": 2, "propose": 3, "final": 4}
OBJECTIVES = ("logdet",)


def stream_rng(master_seed: int, stream: str, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(STREAMS[stream], k)))


@dataclass(frozen=True)
class GpoConfig:
    K: int = 500
    warmup: int = 20
    T: int = 1000
    N: int = 2500
    M: int = 100
    N_limit: int | None = None
    replicates: int = 1
    objective: str = "logdet"
    resampling: str = "multinomial"
    final_replicates: int = 5
    max_failure_fraction: float = 0.2
    matern_order: float = 1.5
    gp_restarts: int = 8
    gp_bounds: HyperBounds | None = None
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)

    def __post_init__(self):
        if self.K < 0:
            raise InvalidInputError("K must be >= 0")
        if self.warmup < 2:
            raise InvalidInputError("warmup must be >= 2")
        for name in ("T", "N", "M", "replicates", "final_replicates", "gp_restarts"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.N_limit is not None and not 1 <= self.N_limit <= self.N:
            raise InvalidInputError("N_limit must lie in [1, N]")
        if self.objective not in OBJECTIVES:
            raise InvalidInputError(f"unknown objective {self.objective!r}")

    @property
    def smoother(self) -> SmootherConfig:
        return SmootherConfig(M=self.M, N_limit=self.N_limit)


@dataclass
class EvaluationResult:
    value: float
    replicate_values: list[float]
    regularized: bool


@dataclass
class IterationRecord:
    k: int
    phase: str
    design: tuple[float, ...]
    h_hat: float
    mu_max: float
    pred_mean: float
    pred_std: float
    best_so_far: float
    hyperparameters: dict | None
    flags: tuple[str, ...]
    wall_ms: float


@dataclass
class GpoResult:
    best_design: np.ndarray
    best_posterior_mean: float
    final_objective: float
    final_objective_replicates: list[float]
    hyperparameters: Hyperparameters | None
    trace: list[IterationRecord]
    failures: list[tuple[int, str]]
    data: TrainingSet


def evaluate_objective(
    model: GaussianSSM,
    theta0,
    design,
    domain,
    cfg: GpoConfig,
    rng: np.random.Generator,
) -> EvaluationResult:
    """Estimate ``h`` of the per-sample information at one design point.

    Each replicate draws an input realization from the design, simulates data
    at ``theta0``, runs filter and smoother, and applies the scalarization.
    """
    design = np.asarray(design, dtype=float)
    if not domain.is_feasible(design, tol=1e-9):
        raise InvalidInputError(f"design {design.tolist()} is infeasible")
    values, regularized = [], False
    try:
        for _ in range(cfg.replicates):
            u = domain.generate(design, cfg.T, rng)
            data = model.simulate(theta0, u, rng)
            fisher, _, _ = estimate_information(
                model, theta0, data.outputs, u, cfg.N, cfg.smoother, rng, resampling=cfg.resampling
            )
            obj = objective_logdet(fisher)
            values.append(obj.value)
            regularized |= obj.regularized
    except (DegenerateFilterError, SingularInformationError, BoundViolationError) as exc:
        raise EvaluationError(design, exc) from exc
    return EvaluationResult(float(np.mean(values)), values, regularized)


def final_design(gp: GpPosterior, domain, data: TrainingSet | None = None, maxfev: int = 400) -> np.ndarray:
    """Feasible maximizer of the posterior mean, searched from every evaluated point.

    Near-ties (relative 1e-9) go to the start with more evaluations, then lexicographically.
    """
    data = data if data is not None else gp.data
    cands, means, counts = [], [], []
    for x0, c in zip(data.points, data.counts):
        x, m = maximize_projected(gp.mean, domain, x0[None, :], maxfev)
        cands.append(x)
        means.append(m)
        counts.append(c)
    means = np.asarray(means)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(means))))
    ties = np.flatnonzero(means >= means.max() - tol)
    ranked = sorted(ties, key=lambda i: (-counts[i], tuple(cands[i])))
    return cands[ranked[0]]


def _fit(D: TrainingSet, hyp, cfg: GpoConfig, seed: int, k: int):
    fit_seed = int(np.random.SeedSequence(seed, spawn_key=(STREAMS["fit"], k)).generate_state(1)[0])
    return fit_hyperparameters(
        D, init=hyp, bounds=cfg.gp_bounds, restarts=cfg.gp_restarts, seed=fit_seed, matern_order=cfg.matern_order
    )


def run_gpo(model: GaussianSSM, theta0, domain, cfg: GpoConfig, seed: int, on_record=None) -> GpoResult:
    """Warm-up sampling, then ``K`` rounds of refit / acquire / evaluate, then the final design.

    ``on_record`` is called with each new :class:`IterationRecord` (used for
    streaming the trace to disk).
    """
    theta0 = model.check_theta(theta0)
    budget = cfg.warmup + cfg.K
    max_failures = cfg.max_failure_fraction * budget
    X: list[np.ndarray] = []
    H: list[float] = []
    trace: list[IterationRecord] = []
    failures: list[tuple[int, str]] = []
    best = -np.inf
    hyp: Hyperparameters | None = None

    def attempt(k, phase, x, mu_max, pred_mean, pred_std, flags):
        nonlocal best
        t0 = time.perf_counter()
        try:
            res = evaluate_objective(model, theta0, x, domain, cfg, stream_rng(seed, "evaluate", k))
        except EvaluationError as exc:
            failures.append((k, str(exc)))
            log.warning("evaluation %d failed: %s", k, exc)
            if len(failures) > max_failures:
                raise DriverAbort(
                    f"{len(failures)} of {budget} planned evaluations failed; last: {exc}"
                ) from exc
            return
        if res.regularized:
            flags = flags + ("regularized",)
        X.append(np.asarray(x, dtype=float))
        H.append(res.value)
        best = max(best, res.value)
        rec = IterationRecord(
            k, phase, tuple(float(v) for v in x), res.value, mu_max, pred_mean, pred_std, best,
            hyp.to_dict() if hyp is not None else None, flags, 1e3 * (time.perf_counter() - t0),
        )
        trace.append(rec)
        if on_record is not None:
            on_record(rec)

    nan = float("nan")
    for k in range(cfg.warmup):
        x = np.atleast_1d(domain.sample(stream_rng(seed, "warmup", k)))
        attempt(k, "warmup", x, nan, nan, nan, ())
    if len(set(map(tuple, X))) < 2:
        raise DriverAbort("fewer than two successful warm-up evaluations")

    for k in range(cfg.warmup, budget):
        D = TrainingSet.from_observations(np.vstack(X), H)
        flags: tuple[str, ...] = ()
        try:
            hyp = _fit(D, hyp, cfg, seed, k)
        except FittingError as exc:
            if hyp is None:
                raise DriverAbort(f"hyperparameter fit failed with no fallback: {exc}") from exc
            flags += ("fit-reused",)
        gp = GpPosterior(hyp, D)
        mu_max = incumbent(gp)
        x = propose_next(gp, domain, cfg.acquisition, stream_rng(seed, "propose", k), mu_max=mu_max)
        mu, _, var_obs = gp.predict(x)
        attempt(k, "gpo", x, mu_max, float(mu[0]), float(np.sqrt(var_obs[0])), flags)

    D = TrainingSet.from_observations(np.vstack(X), H)
    try:
        hyp = _fit(D, hyp, cfg, seed, budget)
    except FittingError:
        if hyp is None:
            raise
    gp = GpPosterior(hyp, D)
    x_best = final_design(gp, domain, D)
    finals = []
    for j in range(cfg.final_replicates):
        try:
            finals.append(evaluate_objective(model, theta0, x_best, domain, cfg, stream_rng(seed, "final", j)).value)
        except EvaluationError as exc:
            failures.append((budget + j, str(exc)))
    final_value = float(np.mean(finals)) if finals else nan
    return GpoResult(
        best_design=x_best,
        best_posterior_mean=float(gp.mean(x_best[None, :])[0]),
        final_objective=final_value,
        final_objective_replicates=finals,
        hyperparameters=hyp,
        trace=trace,
        failures=failures,
        data=D,
    )
