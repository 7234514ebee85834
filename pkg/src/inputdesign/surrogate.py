"""Gaussian-process surrogate of the design objective.

Prior: constant mean plus an ARD Matern kernel and a constant kernel term,
observed through additive Gaussian noise. Hyperparameters are chosen by
maximizing the log marginal likelihood (empirical Bayes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import ConditioningError, FittingError, InvalidInputError

MATERN_ORDERS = (0.5, 1.5, 2.5)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class Hyperparameters:
    mean_const: float
    signal_var: float
    length_scales: tuple[float, ...]
    noise_var: float
    const_var: float = 0.0
    matern_order: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(v) for v in np.atleast_1d(self.length_scales)))
        if self.matern_order not in MATERN_ORDERS:
            raise InvalidInputError(f"matern_order must be one of {MATERN_ORDERS}")
        if not self.signal_var > 0 or min(self.length_scales) <= 0:
            raise InvalidInputError("signal_var and length_scales must be positive")
        if self.noise_var < 0 or self.const_var < 0:
            raise InvalidInputError("noise_var and const_var must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.length_scales)

    @property
    def prior_var(self) -> float:
        return self.signal_var + self.const_var

    def to_dict(self) -> dict:
        return {
            "mean_const": self.mean_const,
            "signal_var": self.signal_var,
            "length_scales": list(self.length_scales),
            "noise_var": self.noise_var,
            "const_var": self.const_var,
            "matern_order": self.matern_order,
        }


def matern(r: np.ndarray, order: float) -> np.ndarray:
    """Unit-variance Matern correlation at scaled distance ``r``."""
    if order == 0.5:
        return np.exp(-r)
    if order == 1.5:
        s = math.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if order == 2.5:
        s = math.sqrt(5.0) * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise InvalidInputError(f"unsupported Matern order {order}")


def _scaled_distance(hyp: Hyperparameters, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    ell = np.asarray(hyp.length_scales)
    A = np.atleast_2d(A) / ell
    B = np.atleast_2d(B) / ell
    # direct differences: the Gram expansion loses precision at short range
    return np.sqrt(np.sum(np.square(A[:, None, :] - B[None, :, :]), axis=-1))


def kernel_matrix(hyp: Hyperparameters, A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != hyp.dim or B.shape[1] != hyp.dim:
        raise InvalidInputError(f"points must have dimension {hyp.dim}")
    return hyp.signal_var * matern(_scaled_distance(hyp, A, B), hyp.matern_order) + hyp.const_var


def kernel(hyp: Hyperparameters, x, x_prime) -> float:
    return float(kernel_matrix(hyp, np.atleast_2d(x), np.atleast_2d(x_prime))[0, 0])


@dataclass(frozen=True)
class TrainingSet:
    """Design points and objective estimates; duplicate points are merged by averaging.

    ``counts`` records how many raw evaluations each row represents.
    """

    points: np.ndarray
    values: np.ndarray
    counts: np.ndarray = field(default=None)

    @classmethod
    def from_observations(cls, points, values, tol: float = 1e-12) -> "TrainingSet":
        X = np.atleast_2d(np.asarray(points, dtype=float))
        y = np.asarray(values, dtype=float).ravel()
        if len(X) != len(y) or len(y) == 0:
            raise InvalidInputError("need matching, non-empty points and values")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("training data must be finite")
        rows: list[np.ndarray] = []
        sums: list[float] = []
        counts: list[int] = []
        for x, v in zip(X, y):
            for j, r in enumerate(rows):
                if np.max(np.abs(r - x)) <= tol:
                    sums[j] += v
                    counts[j] += 1
                    break
            else:
                rows.append(x)
                sums.append(float(v))
                counts.append(1)
        c = np.asarray(counts)
        return cls(np.vstack(rows), np.asarray(sums) / c, c)

    def __post_init__(self):
        if self.counts is None:
            object.__setattr__(self, "counts", np.ones(len(self.values), dtype=int))

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _factorize(G: np.ndarray):
    scale = float(np.mean(np.diag(G)))
    if not np.isfinite(scale) or scale <= 0:
        raise ConditioningError("covariance matrix has a non-positive diagonal")
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            Gj = G + jitter * scale * np.eye(len(G))
            return cho_factor(Gj, lower=True, check_finite=False), Gj
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise ConditioningError("covariance matrix is not positive definite after maximal jitter")


def _gamma(hyp: Hyperparameters, D: TrainingSet, sq: np.ndarray | None = None) -> np.ndarray:
    """Gamma = K + noise_var * diag(1/counts); ``sq`` caches per-dimension squared differences."""
    if sq is None:
        K = kernel_matrix(hyp, D.points, D.points)
    else:
        inv_ell2 = 1.0 / np.square(hyp.length_scales)
        r = np.sqrt(np.tensordot(inv_ell2, sq, axes=1))
        K = hyp.signal_var * matern(r, hyp.matern_order) + hyp.const_var
    return K + np.diag(hyp.noise_var / D.counts)


def _squared_differences(X: np.ndarray) -> np.ndarray:
    return np.square(X.T[:, :, None] - X.T[:, None, :])


class GpPosterior:
    """Posterior of the GP given a training set (immutable after construction)."""

    def __init__(self, hyp: Hyperparameters, data: TrainingSet):
        if data.k == 0:
            raise InvalidInputError("training set is empty")
        if data.dim != hyp.dim:
            raise InvalidInputError(f"training points have dimension {data.dim}, hyperparameters {hyp.dim}")
        self.hyp = hyp
        self.data = data
        self._chol, self.gamma = _factorize(_gamma(hyp, data))
        self._weights = cho_solve(self._chol, data.values - hyp.mean_const, check_finite=False)

    def predict(self, X):
        """Posterior mean, latent variance and predictive (observed) variance at each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Ks = kernel_matrix(self.hyp, X, self.data.points)
        mu = self.hyp.mean_const + Ks @ self._weights
        v = cho_solve(self._chol, Ks.T, check_finite=False)
        var = np.maximum(self.hyp.prior_var - np.sum(Ks * v.T, axis=1), 0.0)
        return mu, var, var + self.hyp.noise_var

    def mean(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.hyp.mean_const + kernel_matrix(self.hyp, X, self.data.points) @ self._weights


def posterior(gp: GpPosterior, x_star) -> tuple[float, float, float]:
    mu, var, var_obs = gp.predict(np.atleast_2d(x_star))
    return float(mu[0]), float(var[0]), float(var_obs[0])


def _lml_from_factor(chol, r: np.ndarray) -> float:
    L = chol[0]
    a = cho_solve(chol, r, check_finite=False)
    return float(-0.5 * r @ a - np.sum(np.log(np.diag(L))) - 0.5 * len(r) * math.log(2.0 * math.pi))


def log_marginal_likelihood(hyp: Hyperparameters, D: TrainingSet) -> float:
    """Gaussian log-evidence of the values under mean ``mean_const`` and covariance Gamma."""
    if D.k == 0:
        raise InvalidInputError("training set is empty")
    chol, _ = _factorize(_gamma(hyp, D))
    return _lml_from_factor(chol, D.values - hyp.mean_const)


@dataclass(frozen=True)
class HyperBounds:
    """Box bounds on the positive hyperparameters (natural scale)."""

    signal_var: tuple[float, float]
    length_scale: tuple[float, float]
    noise_var: tuple[float, float]
    const_var: tuple[float, float]

    @classmethod
    def default_for(cls, D: TrainingSet) -> "HyperBounds":
        v = float(np.var(D.values)) if D.k > 1 else 0.0
        v = max(v, 1e-6 * max(1.0, float(np.mean(D.values)) ** 2), 1e-12)
        span = max(float(np.ptp(D.points)), 1e-2)
        return cls(
            signal_var=(1e-4 * v, 1e2 * v),
            length_scale=(1e-2 * span, 1e2 * span),
            noise_var=(1e-10 * v, 1e1 * v),
            const_var=(1e-10 * v, 1e2 * v),
        )

    def log_box(self, dim: int) -> list[tuple[float, float]]:
        b = [self.signal_var] + [self.length_scale] * dim + [self.noise_var, self.const_var]
        return [(math.log(lo), math.log(hi)) for lo, hi in b]


def _pack(hyp: Hyperparameters) -> np.ndarray:
    return np.log(np.concatenate([[hyp.signal_var], hyp.length_scales, [hyp.noise_var, hyp.const_var]]))


def _unpack(z: np.ndarray, dim: int, mean_const: float, order: float) -> Hyperparameters:
    e = np.exp(z)
    return Hyperparameters(mean_const, float(e[0]), tuple(e[1 : 1 + dim]), float(e[1 + dim]), float(e[2 + dim]), order)


def _profiled(z: np.ndarray, D: TrainingSet, order: float, sq=None) -> tuple[float, Hyperparameters]:
    """LML with the constant mean set to its generalized-least-squares optimum."""
    hyp = _unpack(z, D.dim, 0.0, order)
    chol, _ = _factorize(_gamma(hyp, D, sq))
    one = np.ones(D.k)
    a1 = cho_solve(chol, one, check_finite=False)
    c = float(a1 @ D.values / (a1 @ one))
    return _lml_from_factor(chol, D.values - c), replace(hyp, mean_const=c)


def fit_hyperparameters(
    D: TrainingSet,
    init: Hyperparameters | None = None,
    bounds: HyperBounds | None = None,
    restarts: int = 8,
    seed: int = 0,
    matern_order: float | None = None,
    maxiter: int = 200,
) -> Hyperparameters:
    """Empirical-Bayes fit by multi-start Nelder-Mead in log-parameter space.

    The constant mean is profiled out. Starts are ``init`` (if given) plus
    seeded uniform draws in the log box. The result has LML at least that of
    ``init`` (after clipping ``init`` into the box).
    """
    if D.k < 2:
        raise InvalidInputError("need at least two distinct training points")
    order = matern_order if matern_order is not None else (init.matern_order if init else 1.5)
    bounds = bounds or HyperBounds.default_for(D)
    box = np.asarray(bounds.log_box(D.dim))
    rng = np.random.default_rng(seed)

    starts = []
    if init is not None:
        if init.dim != D.dim:
            raise InvalidInputError("init hyperparameters have the wrong dimension")
        starts.append(np.clip(_pack(init), box[:, 0], box[:, 1]))
    while len(starts) < max(restarts, 1):
        starts.append(rng.uniform(box[:, 0], box[:, 1]))

    sq = _squared_differences(D.points)

    def neg(z):
        try:
            return -_profiled(np.clip(z, box[:, 0], box[:, 1]), D, order, sq)[0]
        except ConditioningError:
            return np.inf

    best_val, best_z = np.inf, None
    for z0 in starts:
        f0 = neg(z0)
        if f0 < best_val:
            best_val, best_z = f0, z0
        if not np.isfinite(f0):
            continue
        res = minimize(neg, z0, method="Nelder-Mead", bounds=list(map(tuple, box)),
                       options={"maxfev": maxiter * len(z0), "xatol": 1e-3, "fatol": 1e-4})
        if res.fun < best_val:
            best_val, best_z = float(res.fun), np.clip(res.x, box[:, 0], box[:, 1])
    if best_z is None or not np.isfinite(best_val):
        raise FittingError("every restart failed to produce a well-conditioned covariance")
    lml, hyp = _profiled(best_z, D, order, sq)
    if init is not None:
        init_c = _unpack(np.clip(_pack(init), box[:, 0], box[:, 1]), D.dim, init.mean_const, order)
        try:
            if log_marginal_likelihood(init_c, D) > lml:
                return init_c
        except ConditioningError:
            pass
    return hyp
