"""Exact Kalman-filter computations for the linear Gaussian benchmark.

These are the ground truth used to validate the particle pipeline. They use
the same initial-state and input conventions as :class:`~inputdesign.model.LgssModel`
(``x_0 ~ N(0, sigma_v^2)``, ``u_0 = u_T``), so agreement is exact in the limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .model import LgssModel, shifted_inputs
from .smc import FisherEstimate, ScoreEstimate


@dataclass
class KalmanState:
    """Filter output. Predicted arrays are indexed t = 1..T (position t-1);
    filtered arrays t = 0..T (position t)."""

    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray
    innovations: np.ndarray
    innovation_var: np.ndarray

    @property
    def loglik(self) -> float:
        S = self.innovation_var
        return float(-0.5 * np.sum(np.log(2.0 * math.pi * S) + self.innovations**2 / S))


@dataclass
class SmootherMoments:
    """``E[x_t | y_{1:T}]`` and ``Var[x_t | y_{1:T}]`` for t = 0..T, and
    ``lag_cov[t-1] = Cov(x_{t-1}, x_t | y_{1:T})`` for t = 1..T."""

    means: np.ndarray
    variances: np.ndarray
    lag_cov: np.ndarray
    filtered: KalmanState


def _prepare(theta, y, u, model):
    model = model or LgssModel()
    theta = model.check_theta(theta)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.ndim != 1 or len(y) != len(u) or len(y) < 1:
        raise InvalidInputError("y and u must be 1-d with equal positive length")
    return model, theta, y, u


def kalman_filter(theta, y, u, model: LgssModel | None = None) -> KalmanState:
    model, (phi, alpha), y, u = _prepare(theta, y, u, model)
    q, r = model.sigma_v**2, model.sigma_e**2
    T = len(y)
    u_prev = shifted_inputs(u)
    pm, pv = np.empty(T), np.empty(T)
    fm, fv = np.empty(T + 1), np.empty(T + 1)
    e, S = np.empty(T), np.empty(T)
    fm[0], fv[0] = 0.0, q
    for t in range(T):
        pm[t] = phi * fm[t] + u_prev[t]
        pv[t] = phi * phi * fv[t] + q
        S[t] = alpha * alpha * pv[t] + r
        e[t] = y[t] - alpha * pm[t]
        K = alpha * pv[t] / S[t]
        fm[t + 1] = pm[t] + K * e[t]
        fv[t + 1] = (1.0 - K * alpha) * pv[t]
    return KalmanState(pm, pv, fm, fv, e, S)


def kalman_loglik(theta, y, u, model: LgssModel | None = None) -> float:
    """Exact log-likelihood by the prediction-error decomposition."""
    return kalman_filter(theta, y, u, model).loglik


def kalman_score(theta, y, u, model: LgssModel | None = None) -> np.ndarray:
    """Exact gradient of :func:`kalman_loglik` with respect to (phi, alpha).

    Propagates the parameter sensitivities of the filtered mean and variance
    alongside the filter itself.
    """
    model, (phi, alpha), y, u = _prepare(theta, y, u, model)
    q, r = model.sigma_v**2, model.sigma_e**2
    u_prev = shifted_inputs(u)
    m, P = 0.0, q
    dm = np.zeros(2)
    dP = np.zeros(2)
    score = np.zeros(2)
    for t in range(len(y)):
        mp = phi * m + u_prev[t]
        Pp = phi * phi * P + q
        dmp = phi * dm + np.array([m, 0.0])
        dPp = phi * phi * dP + np.array([2.0 * phi * P, 0.0])
        S = alpha * alpha * Pp + r
        dS = alpha * alpha * dPp + np.array([0.0, 2.0 * alpha * Pp])
        e = y[t] - alpha * mp
        de = -alpha * dmp - np.array([0.0, mp])
        score += -0.5 * (dS / S + 2.0 * e * de / S - e * e * dS / (S * S))
        K = alpha * Pp / S
        dK = (alpha * dPp + np.array([0.0, Pp])) / S - alpha * Pp * dS / (S * S)
        m = mp + K * e
        dm = dmp + dK * e + K * de
        P = (1.0 - K * alpha) * Pp
        dP = -(dK * alpha + np.array([0.0, K])) * Pp + (1.0 - K * alpha) * dPp
    return score


def exact_smoother_moments(theta, y, u, model: LgssModel | None = None) -> SmootherMoments:
    """Rauch-Tung-Striebel smoother including lag-one cross-covariances."""
    model, (phi, alpha), y, u = _prepare(theta, y, u, model)
    kf = kalman_filter(theta, y, u, model)
    T = len(y)
    ms = kf.filt_mean.copy()
    Ps = kf.filt_var.copy()
    C = np.empty(T)
    for t in range(T - 1, -1, -1):
        J = kf.filt_var[t] * phi / kf.pred_var[t]
        ms[t] = kf.filt_mean[t] + J * (ms[t + 1] - kf.pred_mean[t])
        Ps[t] = kf.filt_var[t] + J * J * (Ps[t + 1] - kf.pred_var[t])
        C[t] = J * Ps[t + 1]
    return SmootherMoments(ms, Ps, C, kf)


def exact_score_terms(theta, y, u, model: LgssModel | None = None) -> ScoreEstimate:
    """Per-time terms ``E[grad xi_t | y_{1:T}]`` computed from exact smoothed moments.

    This is the limit of :func:`inputdesign.smc.estimate_score` as N and M grow.
    """
    model, (phi, alpha), y, u = _prepare(theta, y, u, model)
    sm = exact_smoother_moments(theta, y, u, model)
    m0, m1 = sm.means[:-1], sm.means[1:]
    E01 = m0 * m1 + sm.lag_cov
    E00 = m0 * m0 + sm.variances[:-1]
    E11 = m1 * m1 + sm.variances[1:]
    d_phi = (E01 - phi * E00 - shifted_inputs(u) * m0) / model.sigma_v**2
    d_alpha = (y * m1 - alpha * E11) / model.sigma_e**2
    return ScoreEstimate(np.column_stack([d_phi, d_alpha]))


def exact_fisher_mc(
    theta,
    input_source: Callable[[np.random.Generator, int], np.ndarray],
    T: int,
    R: int,
    rng: np.random.Generator,
    model: LgssModel | None = None,
) -> FisherEstimate:
    """Monte-Carlo per-sample Fisher information ``E[S S'] / T`` from exact scores.

    Each replicate draws a fresh input from ``input_source(rng, T)`` and a fresh data set.
    """
    model = model or LgssModel()
    F = np.zeros((2, 2))
    for _ in range(R):
        u = np.asarray(input_source(rng, T), dtype=float)
        tr = model.simulate(theta, u, rng)
        s = kalman_score(theta, tr.outputs, u, model)
        F += np.outer(s, s)
    F /= R * T
    return FisherEstimate(0.5 * (F + F.T))


def dense_joint(theta, u, model: LgssModel | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``(x_0..x_T, y_1..y_T)`` assembled explicitly.

    Independent of the recursions above; intended for small T only.
    """
    model = model or LgssModel()
    phi, alpha = model.check_theta(theta)
    u = np.asarray(u, dtype=float)
    T = len(u)
    q, r = model.sigma_v**2, model.sigma_e**2
    u_prev = shifted_inputs(u)
    mx = np.zeros(T + 1)
    for t in range(1, T + 1):
        mx[t] = phi * mx[t - 1] + u_prev[t - 1]
    idx = np.arange(T + 1)
    lag = idx[:, None] - idx[None, :]
    B = np.where(lag >= 0, phi ** np.maximum(lag, 0), 0.0)
    Sxx = q * B @ B.T
    C = np.hstack([np.zeros((T, 1)), alpha * np.eye(T)])
    mean = np.concatenate([mx, C @ mx])
    cov = np.block([[Sxx, Sxx @ C.T], [C @ Sxx, C @ Sxx @ C.T + r * np.eye(T)]])
    return mean, cov


def dense_loglik(theta, y, u, model: LgssModel | None = None) -> float:
    model, theta, y, u = _prepare(theta, y, u, model)
    mean, cov = dense_joint(theta, u, model)
    T = len(y)
    S = cov[T + 1:, T + 1:]
    d = y - mean[T + 1:]
    _, logdet = np.linalg.slogdet(S)
    return float(-0.5 * (T * math.log(2.0 * math.pi) + logdet + d @ np.linalg.solve(S, d)))


def dense_conditional(theta, y, u, model: LgssModel | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``E[x_{0:T} | y]`` and ``Cov[x_{0:T} | y]`` by Gaussian conditioning."""
    model, theta, y, u = _prepare(theta, y, u, model)
    mean, cov = dense_joint(theta, u, model)
    n = len(y) + 1
    Sxy = cov[:n, n:]
    Syy = cov[n:, n:]
    gain = np.linalg.solve(Syy, Sxy.T).T
    return mean[:n] + gain @ (y - mean[n:]), cov[:n, :n] - gain @ Sxy.T
