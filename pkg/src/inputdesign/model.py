"""State-space models with Gaussian transition and observation noise.

A model is specified through its conditional densities

    x_0 ~ mu(x_0),  x_t | x_{t-1} ~ f(x_t | x_{t-1}, u_{t-1}),  y_t | x_t ~ g(y_t | x_t, u_t)

together with the gradient of the complete-data term
xi(x_{t-1:t}) = log f + log g with respect to the parameters.

Conventions shared with :mod:`inputdesign.oracle`:

* ``x_0 ~ N(0, sigma_v**2)`` for both benchmark models (parameter free).
* The input driving the first transition is ``u_0 := u_T``; the stationary
  input sequence is treated circularly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CapabilityError, InvalidInputError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Trajectory:
    """Simulated states ``x_{0:T}``, outputs ``y_{1:T}`` and inputs ``u_{1:T}``."""

    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        T = len(self.inputs)
        if len(self.states) != T + 1 or len(self.outputs) != T:
            raise InvalidInputError(
                f"inconsistent lengths: states={len(self.states)}, "
                f"outputs={len(self.outputs)}, inputs={T}"
            )

    @property
    def T(self) -> int:
        return len(self.inputs)


def shifted_inputs(u: np.ndarray) -> np.ndarray:
    """Return ``u_{0:T-1}`` with the circular convention ``u_0 = u_T``."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([u[-1:], u[:-1]])


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite argument")


class GaussianSSM:
    """Scalar SSM with additive Gaussian noise in both equations.

    Subclasses supply the transition mean ``a(theta, x_prev, u_prev)``, the
    observation mean ``c(theta, x, u)`` and their parameter gradients.
    """

    name: str = "gaussian-ssm"
    n_x = 1
    n_y = 1
    n_u = 1
    n_theta = 2
    param_names: tuple[str, ...] = ()
    has_analytic_gradient = True
    has_exact_oracle = False

    def __init__(self, sigma_v: float, sigma_e: float, parameter_bounds):
        if sigma_v < 0 or sigma_e < 0:
            raise InvalidInputError("noise standard deviations must be >= 0")
        self.sigma_v = float(sigma_v)
        self.sigma_e = float(sigma_e)
        self.parameter_bounds = np.asarray(parameter_bounds, dtype=float)

    def __repr__(self):
        return f"{type(self).__name__}(sigma_v={self.sigma_v}, sigma_e={self.sigma_e})"

    # -- to be provided by subclasses -------------------------------------
    def transition_mean(self, theta, x_prev, u_prev):
        raise NotImplementedError

    def transition_mean_grad(self, theta, x_prev, u_prev):
        """Gradient of the transition mean, shape ``x_prev.shape + (n_theta,)``."""
        raise NotImplementedError

    def observation_mean(self, theta, x, u):
        raise NotImplementedError

    def observation_mean_grad(self, theta, x, u):
        raise NotImplementedError

    # -- validation ---------------------------------------------------------
    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise InvalidInputError(f"theta must have length {self.n_theta}, got shape {theta.shape}")
        _check_finite(theta)
        lo, hi = self.parameter_bounds
        if np.any(theta < lo) or np.any(theta > hi):
            raise InvalidInputError(f"theta={theta.tolist()} outside parameter domain {self.parameter_bounds.tolist()}")
        return theta

    def _require_noise(self):
        if self.sigma_v <= 0 or self.sigma_e <= 0:
            raise CapabilityError("densities are undefined for a noise-free model")

    # -- densities ------------------------------------------------------------
    def log_f(self, theta, x_t, x_prev, u_prev):
        """Log transition density ``log f(x_t | x_prev, u_prev)``."""
        self._require_noise()
        theta = self.check_theta(theta)
        _check_finite(x_t, x_prev, u_prev)
        return self._log_f(theta, x_t, x_prev, u_prev)

    def log_g(self, theta, y_t, x_t, u_t):
        """Log observation density ``log g(y_t | x_t, u_t)``."""
        self._require_noise()
        theta = self.check_theta(theta)
        _check_finite(y_t, x_t, u_t)
        return self._log_g(theta, y_t, x_t, u_t)

    # Unchecked versions for the particle loops; theta is validated once upstream.
    def _log_f(self, theta, x_t, x_prev, u_prev):
        return self._log_f_given_mean(x_t, self.transition_mean(theta, x_prev, u_prev))

    def _log_f_given_mean(self, x_t, mean):
        r = (np.asarray(x_t) - mean) * (1.0 / self.sigma_v)
        return -0.5 * r * r - (math.log(self.sigma_v) + LOG_SQRT_2PI)

    def _log_g(self, theta, y_t, x_t, u_t):
        r = (np.asarray(y_t) - self.observation_mean(theta, x_t, u_t)) / self.sigma_e
        return -0.5 * r * r - math.log(self.sigma_e) - LOG_SQRT_2PI

    def grad_log_f(self, theta, x_t, x_prev, u_prev):
        x_t = np.asarray(x_t, dtype=float)
        r = (x_t - self.transition_mean(theta, x_prev, u_prev)) / self.sigma_v**2
        return r[..., None] * self.transition_mean_grad(theta, x_prev, u_prev)

    def grad_log_g(self, theta, y_t, x_t, u_t):
        y_t = np.asarray(y_t, dtype=float)
        r = (y_t - self.observation_mean(theta, x_t, u_t)) / self.sigma_e**2
        return r[..., None] * self.observation_mean_grad(theta, x_t, u_t)

    def grad_xi(self, theta, x_prev, x_t, y_t, u_prev, u_t):
        """Gradient of ``log f(x_t|x_prev,u_prev) + log g(y_t|x_t,u_t)`` in theta.

        Arguments broadcast; the result has a trailing axis of length n_theta.
        """
        if not self.has_analytic_gradient:
            raise CapabilityError(f"{self.name} has no analytic gradient")
        self._require_noise()
        theta = self.check_theta(theta)
        _check_finite(x_prev, x_t, y_t, u_prev, u_t)
        x_prev, x_t, y_t, u_prev, u_t = np.broadcast_arrays(
            *(np.asarray(a, dtype=float) for a in (x_prev, x_t, y_t, u_prev, u_t))
        )
        return self.grad_log_f(theta, x_t, x_prev, u_prev) + self.grad_log_g(theta, y_t, x_t, u_t)

    def transition_density_bound(self, theta=None) -> float:
        """Supremum of the Gaussian transition density, ``1/(sigma_v sqrt(2 pi))``."""
        if self.sigma_v <= 0:
            raise CapabilityError("transition density is unbounded for sigma_v = 0")
        return 1.0 / (self.sigma_v * math.sqrt(2.0 * math.pi))

    # -- sampling -------------------------------------------------------------
    def sample_initial(self, theta, size, rng: np.random.Generator):
        return self.sigma_v * rng.standard_normal(size)

    def sample_transition(self, theta, x_prev, u_prev, rng: np.random.Generator):
        mean = self.transition_mean(theta, x_prev, u_prev)
        return mean + self.sigma_v * rng.standard_normal(np.shape(mean))

    def sample_observation(self, theta, x, u, rng: np.random.Generator):
        mean = self.observation_mean(theta, x, u)
        return mean + self.sigma_e * rng.standard_normal(np.shape(mean))

    def simulate(self, theta, u, rng: np.random.Generator) -> Trajectory:
        """Draw ``x_{0:T}`` and ``y_{1:T}`` given the input ``u_{1:T}``."""
        theta = self.check_theta(theta)
        u = np.asarray(u, dtype=float)
        if u.ndim != 1 or len(u) < 1:
            raise InvalidInputError("u must be a non-empty 1-d sequence")
        _check_finite(u)
        T = len(u)
        u_prev = shifted_inputs(u)
        x = np.empty(T + 1)
        x[0] = self.sample_initial(theta, None, rng)
        v = self.sigma_v * rng.standard_normal(T)
        for t in range(1, T + 1):
            x[t] = self.transition_mean(theta, x[t - 1], u_prev[t - 1]) + v[t - 1]
        y = self.observation_mean(theta, x[1:], u) + self.sigma_e * rng.standard_normal(T)
        return Trajectory(states=x, outputs=np.asarray(y, dtype=float), inputs=u)


class LgssModel(GaussianSSM):
    """``x_t = phi x_{t-1} + u_{t-1} + v_t``, ``y_t = alpha x_t + e_t``; theta = (phi, alpha)."""

    name = "lgss"
    param_names = ("phi", "alpha")
    has_exact_oracle = True

    def __init__(self, sigma_v: float = 0.1, sigma_e: float = 0.1):
        super().__init__(sigma_v, sigma_e, parameter_bounds=[[-0.999, -10.0], [0.999, 10.0]])

    def transition_mean(self, theta, x_prev, u_prev):
        return theta[0] * np.asarray(x_prev) + np.asarray(u_prev)

    def transition_mean_grad(self, theta, x_prev, u_prev):
        x_prev = np.asarray(x_prev, dtype=float)
        return np.stack([x_prev, np.zeros_like(x_prev)], axis=-1)

    def observation_mean(self, theta, x, u):
        return theta[1] * np.asarray(x)

    def observation_mean_grad(self, theta, x, u):
        x = np.asarray(x, dtype=float)
        return np.stack([np.zeros_like(x), x], axis=-1)


class BenchNonlinearModel(GaussianSSM):
    """``x_t = 1/(gamma + x_{t-1}^2) + u_{t-1} + v_t``, ``y_t = beta x_t^2 + e_t``."""

    name = "bench-nonlinear"
    param_names = ("gamma", "beta")

    def __init__(self, sigma_v: float = 0.1, sigma_e: float = 1.0):
        super().__init__(sigma_v, sigma_e, parameter_bounds=[[1e-3, -10.0], [100.0, 10.0]])

    def transition_mean(self, theta, x_prev, u_prev):
        x_prev = np.asarray(x_prev)
        return 1.0 / (theta[0] + x_prev * x_prev) + np.asarray(u_prev)

    def transition_mean_grad(self, theta, x_prev, u_prev):
        x_prev = np.asarray(x_prev, dtype=float)
        d = theta[0] + x_prev * x_prev
        return np.stack([-1.0 / (d * d), np.zeros_like(x_prev)], axis=-1)

    def observation_mean(self, theta, x, u):
        x = np.asarray(x)
        return theta[1] * x * x

    def observation_mean_grad(self, theta, x, u):
        x = np.asarray(x, dtype=float)
        return np.stack([np.zeros_like(x), x * x], axis=-1)


MODELS: dict[str, Callable[[], GaussianSSM]] = {
    LgssModel.name: LgssModel,
    BenchNonlinearModel.name: BenchNonlinearModel,
}

DEFAULT_THETA = {
    LgssModel.name: (0.8, 1.0),
    BenchNonlinearModel.name: (2.0, 0.8),
}


def register_model(name: str, factory: Callable[[], GaussianSSM]) -> None:
    if name in MODELS:
        raise InvalidInputError(f"model {name!r} already registered")
    MODELS[name] = factory


def get_model(name: str) -> GaussianSSM:
    try:
        return MODELS[name]()
    except KeyError:
        raise InvalidInputError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
