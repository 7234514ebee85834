"""Expected-improvement acquisition over a design domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import InfeasibleProposalError, InvalidInputError
from .surrogate import GpPosterior, TrainingSet


@dataclass(frozen=True)
class AcquisitionConfig:
    xi: float = 0.01
    restarts: int = 16
    walk_halfwidth: float = 0.01
    jitter_scale: float = 0.05
    local_maxfev: int = 120

    def __post_init__(self):
        if self.xi < 0:
            raise InvalidInputError("xi must be >= 0")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")
        if self.walk_halfwidth < 0:
            raise InvalidInputError("walk_halfwidth must be >= 0")


def incumbent(gp: GpPosterior, data: TrainingSet | None = None) -> float:
    """Largest posterior mean over the evaluated design points."""
    data = data if data is not None else gp.data
    return float(np.max(gp.mean(data.points)))


def ei_closed_form(mu, sigma, mu_max: float, xi: float) -> np.ndarray:
    """``E[max(0, H - mu_max - xi)]`` for ``H ~ N(mu, sigma^2)``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gain = mu - mu_max - xi
    safe = np.where(sigma > 0, sigma, 1.0)
    z = gain / safe
    ei = gain * norm.cdf(z) + safe * norm.pdf(z)
    return np.where(sigma > 0, np.maximum(ei, 0.0), np.maximum(gain, 0.0))


def expected_improvement(gp: GpPosterior, mu_max: float, xi: float, X) -> np.ndarray:
    """EI at each row of X, using the latent (noise-free) posterior std."""
    mu, var, _ = gp.predict(X)
    return ei_closed_form(mu, np.sqrt(var), mu_max, xi)


def _argmax_lex(points: np.ndarray, values: np.ndarray, tol: float = 0.0) -> int:
    best = np.max(values)
    ties = np.flatnonzero(values >= best - tol)
    if len(ties) == 1:
        return int(ties[0])
    order = np.lexsort(points[ties].T[::-1])
    return int(ties[order[0]])


def maximize_projected(objective, domain, starts: np.ndarray, maxfev: int) -> tuple[np.ndarray, float]:
    """Multi-start Nelder-Mead on ``objective(domain.project(z))``; returns the best feasible point."""
    def neg(z):
        return -float(objective(domain.project(z)[None, :])[0])

    cands, vals = [], []
    for z0 in starts:
        x0 = domain.project(z0)
        cands.append(x0)
        vals.append(-neg(x0))
        res = minimize(neg, x0, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": 1e-5, "fatol": 1e-10, "initial_simplex": _simplex(x0)})
        x = domain.project(res.x)
        cands.append(x)
        vals.append(-neg(x))
    cands = np.vstack(cands)
    vals = np.asarray(vals)
    i = _argmax_lex(cands, vals)
    return cands[i], float(vals[i])


def _simplex(x0: np.ndarray, step: float = 0.05) -> np.ndarray:
    return np.vstack([x0] + [x0 + step * e for e in np.eye(len(x0))])


def default_starts(gp: GpPosterior, domain, config: AcquisitionConfig, rng: np.random.Generator) -> np.ndarray:
    """Half uniform over the domain, half jittered copies of the best training points."""
    n_jit = config.restarts // 2
    n_uni = config.restarts - n_jit
    starts = [np.atleast_2d(domain.sample(rng, size=n_uni))]
    if n_jit:
        pts = gp.data.points
        order = np.argsort(-gp.mean(pts), kind="stable")
        best = pts[order[np.arange(n_jit) % len(pts)]]
        jit = best + config.jitter_scale * rng.standard_normal(best.shape)
        starts.append(np.vstack([domain.project(z) for z in jit]))
    return np.vstack(starts)


def propose_next(
    gp: GpPosterior,
    domain,
    config: AcquisitionConfig,
    rng: np.random.Generator,
    mu_max: float | None = None,
    starts: np.ndarray | None = None,
) -> np.ndarray:
    """Maximize EI, perturb the maximizer by a uniform random walk, and project back."""
    mu_max = incumbent(gp) if mu_max is None else mu_max
    if starts is None:
        starts = default_starts(gp, domain, config, rng)

    def ei(X):
        return expected_improvement(gp, mu_max, config.xi, X)

    x_best, _ = maximize_projected(ei, domain, np.atleast_2d(starts), config.local_maxfev)
    h = config.walk_halfwidth
    step = rng.uniform(-h, h, size=x_best.shape) if h > 0 else np.zeros_like(x_best)
    proposal = domain.project(x_best + step)
    if not domain.is_feasible(proposal, tol=1e-9):
        raise InfeasibleProposalError(f"projected proposal {proposal.tolist()} is infeasible")
    return proposal
