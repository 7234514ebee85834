"""Bootstrap particle filter, FFBSi smoother with rejection sampling and early
stopping, and the resulting score and Fisher-information estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BoundViolationError, DegenerateFilterError, InvalidInputError, SingularInformationError
from .model import GaussianSSM, shifted_inputs

RESAMPLING_SCHEMES = ("multinomial", "systematic")


@dataclass
class ParticleSystem:
    """Output of :func:`bootstrap_pf`.

    ``particles[t]`` holds ``x_t^{(i)}`` for t = 0..T and ``weights[t]`` the
    normalized weights (row 0 is uniform). ``ancestors[t - 1]`` holds the
    zero-based resampling indices ``a_t``. ``log_weight_sums[t - 1]`` is
    ``log(sum_i w~_t^{(i)} / N)``, so their total is the log-likelihood estimate.
    """

    particles: np.ndarray
    weights: np.ndarray
    ancestors: np.ndarray
    log_weight_sums: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray

    @property
    def T(self) -> int:
        return self.particles.shape[0] - 1

    @property
    def N(self) -> int:
        return self.particles.shape[1]

    @property
    def loglik(self) -> float:
        return float(np.sum(self.log_weight_sums))


@dataclass
class BackwardTrajectorySet:
    """``M`` smoothed trajectories ``x~_{0:T}`` and their forward-particle indices."""

    trajectories: np.ndarray
    indices: np.ndarray
    rejection_draws: int = 0
    exact_draws: int = 0

    @property
    def M(self) -> int:
        return self.trajectories.shape[0]


@dataclass
class ScoreEstimate:
    per_time: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.per_time.sum(axis=0)

    @property
    def T(self) -> int:
        return self.per_time.shape[0]


@dataclass
class FisherEstimate:
    matrix: np.ndarray


@dataclass(frozen=True)
class SmootherConfig:
    M: int = 100
    N_limit: int | None = None  # None -> ceil(sqrt(N))
    rho: float | None = None  # None -> model.transition_density_bound(theta)
    max_rejection_rounds: int = 1000

    def __post_init__(self):
        if self.M < 1:
            raise InvalidInputError("M must be >= 1")
        if self.N_limit is not None and self.N_limit < 1:
            raise InvalidInputError("N_limit must be >= 1")
        if self.rho is not None and not self.rho > 0:
            raise InvalidInputError("rho must be > 0")

    def resolved_limit(self, N: int) -> int:
        return self.N_limit if self.N_limit is not None else math.ceil(math.sqrt(N))


class ObjectiveValue(NamedTuple):
    value: float
    regularized: bool


def _multinomial(w: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(w) - 1)


def _systematic(w: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    pos = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, pos, side="right"), len(w) - 1)


def _rowwise_categorical(logw: np.ndarray, rng: np.random.Generator, block: int = 64) -> np.ndarray:
    """One draw from each row of unnormalized log-weights, shape ``[rows, N]``.

    Two-level inverse CDF: locate the block by cumulative block sums, then the
    element inside that block.
    """
    rows, N = logw.shape
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    n_blocks = -(-N // block)
    if n_blocks * block != N:
        w = np.concatenate([w, np.zeros((rows, n_blocks * block - N))], axis=1)
    w = w.reshape(rows, n_blocks, block)
    cb = np.cumsum(w.sum(axis=2), axis=1)
    target = rng.random(rows) * cb[:, -1]
    k = np.minimum((cb <= target[:, None]).sum(axis=1), n_blocks - 1)
    r = np.arange(rows)
    below = np.where(k > 0, cb[r, k - 1], 0.0)
    inner = np.cumsum(w[r, k], axis=1)
    i = (inner <= (target - below)[:, None]).sum(axis=1)
    # guard against round-off pushing past the last positive entry of the block
    i = np.minimum(i, block - 1)
    last_pos = block - 1 - np.argmax(w[r, k][:, ::-1] > 0, axis=1)
    i = np.minimum(i, last_pos)
    return np.minimum(k * block + i, N - 1)


def bootstrap_pf(
    model: GaussianSSM,
    theta,
    y,
    u,
    N: int,
    rng: np.random.Generator,
    resampling: str = "multinomial",
) -> ParticleSystem:
    """Run the bootstrap particle filter with prior-transition proposals.

    Resampling is multinomial by default; ``"systematic"`` is experimental.
    """
    theta = model.check_theta(theta)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    T = len(y)
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    if T < 1 or len(u) != T:
        raise InvalidInputError(f"y and u must have equal positive length, got {len(y)} and {len(u)}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u))):
        raise InvalidInputError("non-finite observations or inputs")
    if resampling not in RESAMPLING_SCHEMES:
        raise InvalidInputError(f"unknown resampling scheme {resampling!r}")
    resample = _multinomial if resampling == "multinomial" else _systematic

    u_prev = shifted_inputs(u)
    particles = np.empty((T + 1, N))
    weights = np.empty((T + 1, N))
    ancestors = np.empty((T, N), dtype=np.int64)
    log_sums = np.empty(T)

    particles[0] = model.sample_initial(theta, N, rng)
    weights[0] = 1.0 / N
    for t in range(1, T + 1):
        a = resample(weights[t - 1], N, rng)
        ancestors[t - 1] = a
        particles[t] = model.sample_transition(theta, particles[t - 1, a], u_prev[t - 1], rng)
        logw = model._log_g(theta, y[t - 1], particles[t], u[t - 1])
        m = np.max(logw)
        if not np.isfinite(m):
            raise DegenerateFilterError(t)
        w = np.exp(logw - m)
        s = w.sum()
        if not s > 0 or not np.isfinite(s):
            raise DegenerateFilterError(t)
        weights[t] = w / s
        log_sums[t - 1] = m + math.log(s) - math.log(N)
    return ParticleSystem(particles, weights, ancestors, log_sums, y, u)


def ffbsi_es(
    model: GaussianSSM,
    theta,
    ps: ParticleSystem,
    cfg: SmootherConfig,
    rng: np.random.Generator,
) -> BackwardTrajectorySet:
    """Backward simulation with rejection sampling and early stopping.

    Backward indices are drawn by rejection sampling (proposal: filter
    weights, acceptance ``f(x~_{t+1} | x_t^{(i)}) / rho``) while at least
    ``N_limit`` trajectories are pending; the rest use the exact backward
    weights. Every pending trajectory gets one proposal per round.
    """
    theta = model.check_theta(theta)
    rho = cfg.rho if cfg.rho is not None else model.transition_density_bound(theta)
    log_rho = math.log(rho)
    n_limit = cfg.resolved_limit(ps.N)
    T, M = ps.T, cfg.M
    u_prev = shifted_inputs(ps.inputs)

    idx = np.empty((M, T + 1), dtype=np.int64)
    idx[:, T] = _multinomial(ps.weights[T], M, rng)
    n_rejection = n_exact = 0
    with np.errstate(divide="ignore"):
        for t in range(T - 1, -1, -1):
            w_t = ps.weights[t]
            mean_t = model.transition_mean(theta, ps.particles[t], u_prev[t])
            x_next = ps.particles[t + 1, idx[:, t + 1]]
            b = np.empty(M, dtype=np.int64)
            pending = np.arange(M)
            rounds = 0
            while len(pending) >= n_limit and rounds < cfg.max_rejection_rounds:
                n = len(pending)
                cand = _multinomial(w_t, n, rng)
                U = rng.random(n)
                log_ratio = model._log_f_given_mean(x_next[pending], mean_t[cand]) - log_rho
                if np.max(log_ratio) > 1e-12:
                    raise BoundViolationError(
                        f"transition density exceeds rho={rho:g} at t={t} (ratio {math.exp(np.max(log_ratio)):.6g})"
                    )
                accept = U <= np.exp(log_ratio)
                b[pending[accept]] = cand[accept]
                n_rejection += int(accept.sum())
                pending = pending[~accept]
                rounds += 1
            if len(pending):
                logw = np.log(w_t)[None, :] + model._log_f_given_mean(x_next[pending][:, None], mean_t[None, :])
                b[pending] = _rowwise_categorical(logw, rng)
                n_exact += len(pending)
            idx[:, t] = b
    traj = ps.particles[np.arange(T + 1)[None, :], idx]
    return BackwardTrajectorySet(traj, idx, n_rejection, n_exact)


def estimate_score(model: GaussianSSM, theta, trajectories, y, u) -> ScoreEstimate:
    """Per-time score terms ``S_t = mean_j grad xi(x~_{t-1}^{(j)}, x~_t^{(j)})``, t = 1..T.

    ``trajectories`` is a :class:`BackwardTrajectorySet` or an ``[M, T+1]`` array.
    """
    X = trajectories.trajectories if isinstance(trajectories, BackwardTrajectorySet) else np.asarray(trajectories, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(y) + 1 or len(u) != len(y):
        raise InvalidInputError(f"trajectories of shape {X.shape} do not span t = 0..{len(y)}")
    g = model.grad_xi(theta, X[:, :-1], X[:, 1:], y[None, :], shifted_inputs(u)[None, :], u[None, :])
    return ScoreEstimate(g.mean(axis=0))


def estimate_fisher(score: ScoreEstimate | np.ndarray, T: int | None = None) -> FisherEstimate:
    """Information estimate ``(1/T)[sum_t S_t S_t' - S S' / T]``.

    Computed in the equivalent centered form, which is symmetric and PSD by construction.
    """
    S = score.per_time if isinstance(score, ScoreEstimate) else np.asarray(score, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    T_eff = S.shape[0]
    if T is not None and T != T_eff:
        raise InvalidInputError(f"T={T} does not match the {T_eff} per-time score terms")
    D = S - S.mean(axis=0)
    F = D.T @ D / T_eff
    return FisherEstimate(0.5 * (F + F.T))


def objective_logdet(fisher: FisherEstimate | np.ndarray) -> ObjectiveValue:
    """D-optimality ``log det I``; jitters a non-PD matrix once before giving up."""
    A = fisher.matrix if isinstance(fisher, FisherEstimate) else np.asarray(fisher, dtype=float)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise InvalidInputError("information matrix is not symmetric")
    lam = np.linalg.eigvalsh(A)
    regularized = False
    if lam[0] <= 0:
        eps = 1e-10 * max(float(np.trace(A)), 1.0)
        lam = lam + eps
        regularized = True
        if lam[0] <= 0:
            raise SingularInformationError(f"information matrix is singular (min eigenvalue {lam[0] - eps:.3g})")
    return ObjectiveValue(float(np.sum(np.log(lam))), regularized)


def estimate_information(
    model: GaussianSSM,
    theta,
    y,
    u,
    N: int,
    cfg: SmootherConfig,
    rng: np.random.Generator,
    resampling: str = "multinomial",
) -> tuple[FisherEstimate, ScoreEstimate, ParticleSystem]:
    """Filter, smooth, and estimate the per-sample information for one data set."""
    ps = bootstrap_pf(model, theta, y, u, N, rng, resampling=resampling)
    bt = ffbsi_es(model, theta, ps, cfg, rng)
    score = estimate_score(model, theta, bt, y, u)
    return estimate_fisher(score), score, ps
