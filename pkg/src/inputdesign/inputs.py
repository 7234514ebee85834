"""Finite-dimensional parameterizations of stationary input signals.

Two design domains are provided:

* :class:`MarkovDomain` -- stationary pmfs on blocks of ``n`` consecutive
  symbols from a finite alphabet, written as convex combinations of the
  extreme points of that polytope. The extreme points are the uniform
  distributions over the edge sets of elementary cycles in the de Bruijn
  graph with nodes ``C^(n-1)`` and edges ``C^n``.
* :class:`ArDomain` -- coefficients and innovation scale of a stable
  autoregressive filter driven by Gaussian white noise.

Both expose the same small interface used by the optimizer: ``dim``,
``sample``, ``project``, ``is_feasible`` and ``generate``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import CapacityError, InvalidInputError, StabilityError

MAX_BLOCKS = 4096
MAX_CYCLES = 100_000
STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class Alphabet:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise InvalidInputError("an alphabet needs at least two values")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("alphabet values must be finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvalidInputError(f"alphabet must be strictly increasing, got {vals}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)


def block_tuples(q: int, n: int) -> list[tuple[int, ...]]:
    """All blocks of symbol indices in lexicographic order (first symbol most significant)."""
    return list(itertools.product(range(q), repeat=n))


def block_index(block, q: int) -> int:
    idx = 0
    for s in block:
        idx = idx * q + s
    return idx


def stationarity_residual(pmf: np.ndarray, q: int, n: int) -> float:
    """Largest violation among nonnegativity, unit mass and shift invariance."""
    p = np.asarray(pmf, dtype=float)
    worst = max(0.0, -float(p.min()), abs(float(p.sum()) - 1.0))
    if n >= 2:
        P = p.reshape((q,) * n)
        lead = P.sum(axis=0)  # sum_v p(v, z)
        trail = P.sum(axis=-1)  # sum_v p(z, v)
        worst = max(worst, float(np.abs(lead - trail).max()))
    return worst


def _elementary_cycles(q: int, k: int, max_cycles: int) -> list[list[int]]:
    """Elementary cycles (as node sequences) of the de Bruijn graph on ``q^k`` nodes.

    Each cycle is reported once, rooted at its smallest node; the search from
    root ``s`` only visits nodes greater than ``s``.
    """
    n_nodes = q**k
    succ = [[(v * q) % n_nodes + c for c in range(q)] for v in range(n_nodes)]
    cycles: list[list[int]] = []
    for s in range(n_nodes):
        path = [s]
        on_path = {s}
        stack = [iter(sorted(set(succ[s])))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt == s:
                cycles.append(list(path))
                if len(cycles) > max_cycles:
                    raise CapacityError(f"more than {max_cycles} elementary cycles")
            elif nxt > s and nxt not in on_path:
                path.append(nxt)
                on_path.add(nxt)
                stack.append(iter(sorted(set(succ[nxt]))))
    return cycles


def enumerate_extreme_points(alphabet: Alphabet, n: int, max_cycles: int = MAX_CYCLES) -> list[np.ndarray]:
    """Extreme points of the set of stationary pmfs on ``C^n``.

    Each pmf is a vector over blocks in lexicographic order. The list is
    ordered by cycle length, then lexicographically by the cycle's block
    indices.
    """
    q = len(alphabet)
    if n < 1:
        raise InvalidInputError("block length n must be >= 1")
    if q**n > MAX_BLOCKS:
        raise CapacityError(f"|C|^n = {q**n} exceeds the limit of {MAX_BLOCKS} blocks")
    if n == 1:
        return [np.eye(q)[i] for i in range(q)]
    k = n - 1
    supports = set()
    for cyc in _elementary_cycles(q, k, max_cycles):
        # edge from node a to node b is the n-block (a's symbols, last symbol of b)
        edges = tuple(sorted(a * q + b % q for a, b in zip(cyc, cyc[1:] + cyc[:1])))
        supports.add(edges)
    ordered = sorted(supports, key=lambda e: (len(e), e))
    points = []
    for edges in ordered:
        p = np.zeros(q**n)
        p[list(edges)] = 1.0 / len(edges)
        points.append(p)
    return points


def project_weights(raw, method: str = "clamp") -> np.ndarray:
    """Map a real vector onto the probability simplex.

    ``"clamp"`` zeroes negative entries and renormalizes (all-zero input gives
    uniform weights); ``"euclidean"`` is the nearest point in Euclidean norm.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise InvalidInputError("weights must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("weights must be finite")
    if method == "clamp":
        x = np.maximum(x, 0.0)
        s = x.sum()
        if s <= 0:
            return np.full(len(x), 1.0 / len(x))
        return x / s
    if method == "euclidean":
        srt = np.sort(x)[::-1]
        css = np.cumsum(srt) - 1.0
        ks = np.arange(1, len(x) + 1)
        k = ks[srt - css / ks > 0][-1]
        return np.maximum(x - css[k - 1] / k, 0.0)
    raise InvalidInputError(f"unknown projection {method!r}")


def generate_markov(pmf, alphabet: Alphabet, n: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Input realization of length ``T`` from a stationary chain with block pmf ``pmf``.

    For ``n = 1`` symbols are i.i.d.; otherwise the first ``n-1`` symbols come
    from the block marginal and each next symbol from the conditional
    ``p(u_{t-n+1:t}) / p(u_{t-n+1:t-1})``.
    """
    q = len(alphabet)
    p = np.asarray(pmf, dtype=float)
    if p.shape != (q**n,):
        raise InvalidInputError(f"pmf must have {q**n} entries")
    p = np.maximum(p, 0.0)
    p = p / p.sum()
    vals = alphabet.as_array()
    if n == 1:
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        return vals[np.searchsorted(cdf, rng.random(T), side="right")]

    P = p.reshape(q ** (n - 1), q)
    prefix_mass = P.sum(axis=1)
    symbol_marginal = p.reshape((q,) * n).sum(axis=tuple(range(1, n)))
    cond = np.where(prefix_mass[:, None] > 0, P / np.where(prefix_mass > 0, prefix_mass, 1.0)[:, None], 0.0)
    cond_cdf = np.cumsum(cond, axis=1)
    marg_cdf = np.cumsum(symbol_marginal)
    marg_cdf[-1] = 1.0
    start_cdf = np.cumsum(prefix_mass)
    start_cdf[-1] = 1.0

    U = rng.random(T + 1)
    state = min(int(np.searchsorted(start_cdf, U[0], side="right")), q ** (n - 1) - 1)
    digits = [(state // q**j) % q for j in range(n - 2, -1, -1)]
    out = np.empty(T, dtype=np.int64)
    m = min(n - 1, T)
    out[:m] = digits[:m]
    for t in range(m, T):
        if prefix_mass[state] > 0:
            row = cond_cdf[state]
            s = min(int(np.searchsorted(row, U[t + 1] * row[-1], side="right")), q - 1)
        else:
            s = min(int(np.searchsorted(marg_cdf, U[t + 1], side="right")), q - 1)
        out[t] = s
        state = (state * q) % (q ** (n - 1)) + s
    return vals[out]


def ar_roots(coeffs) -> np.ndarray:
    """Zeros of ``A(q) = 1 + a_1 q^-1 + ... + a_na q^-na`` in the variable q."""
    a = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if a.ndim != 1 or len(a) == 0:
        return np.zeros(0)
    n = len(a)
    companion = np.zeros((n, n))
    companion[0, :] = -a
    if n > 1:
        companion[1:, :-1] = np.eye(n - 1)
    return np.linalg.eigvals(companion)


def ar_is_stable(coeffs, margin: float = STABILITY_MARGIN) -> bool:
    a = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(a)):
        return False
    roots = ar_roots(a)
    return bool(len(roots) == 0 or np.max(np.abs(roots)) < 1.0 - margin)


def ar_burn_in(coeffs) -> int:
    """Default burn-in ``ceil(10 n_a / (1 - max |zero|))``."""
    a = np.atleast_1d(np.asarray(coeffs, dtype=float))
    radius = float(np.max(np.abs(ar_roots(a)))) if len(a) else 0.0
    return int(math.ceil(10 * len(a) / (1.0 - radius)))


def ar_generate(coeffs, sigma_e: float, T: int, rng: np.random.Generator, burn_in: int | None = None) -> np.ndarray:
    """Realization of ``A(q) u_t = e_t`` with burn-in to approach stationarity."""
    a = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if not ar_is_stable(a):
        raise StabilityError(f"AR coefficients {a.tolist()} are not stable")
    if not sigma_e > 0:
        raise InvalidInputError("sigma_e must be > 0")
    burn = ar_burn_in(a) if burn_in is None else int(burn_in)
    e = sigma_e * rng.standard_normal(T + burn)
    return lfilter([1.0], np.concatenate([[1.0], a]), e)[burn:]


class MarkovDomain:
    """Simplex weights over the extreme points of the stationary block pmfs."""

    kind = "markov"

    def __init__(self, alphabet: Alphabet | tuple | list, n: int = 1, projection: str = "clamp"):
        self.alphabet = alphabet if isinstance(alphabet, Alphabet) else Alphabet(tuple(alphabet))
        self.n = int(n)
        self.projection = projection
        self.extreme_points = enumerate_extreme_points(self.alphabet, self.n)
        self._P = np.vstack(self.extreme_points)

    @property
    def n_vertices(self) -> int:
        return len(self.extreme_points)

    @property
    def dim(self) -> int:
        return self.n_vertices

    def __repr__(self):
        return f"MarkovDomain(alphabet={self.alphabet.values}, n={self.n}, n_V={self.n_vertices})"

    def compose_pmf(self, weights) -> np.ndarray:
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.n_vertices,):
            raise InvalidInputError(f"expected {self.n_vertices} weights, got shape {w.shape}")
        return w @ self._P

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Uniform draws on the simplex."""
        return rng.dirichlet(np.ones(self.n_vertices), size=size)

    def project(self, x) -> np.ndarray:
        return project_weights(x, self.projection)

    def is_feasible(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(x.shape == (self.n_vertices,) and np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def center(self) -> np.ndarray:
        return np.full(self.n_vertices, 1.0 / self.n_vertices)

    def generate(self, params, T: int, rng: np.random.Generator) -> np.ndarray:
        return generate_markov(self.compose_pmf(params), self.alphabet, self.n, T, rng)

    def constant_vertices(self) -> list[int]:
        """Indices of extreme points that yield a constant input (self-loop cycles)."""
        q = len(self.alphabet)
        const_blocks = {block_index((s,) * self.n, q) for s in range(q)}
        return [i for i, p in enumerate(self.extreme_points) if np.count_nonzero(p) == 1 and int(np.argmax(p)) in const_blocks]

    def describe(self) -> dict:
        return {"kind": self.kind, "alphabet": list(self.alphabet.values), "n": self.n}


@dataclass
class ArDomain:
    """AR coefficients ``a_1..a_na`` in a box (containing 0) plus innovation std ``sigma_e``.

    Design vector layout: ``[a_1, ..., a_na, sigma_e]``.
    """

    order: int = 1
    coeff_bounds: tuple[float, float] = (-2.0, 2.0)
    sigma_bounds: tuple[float, float] = (0.1, 1.0)
    kind: str = field(default="ar", init=False)

    def __post_init__(self):
        lo, hi = self.coeff_bounds
        if self.order < 1:
            raise InvalidInputError("AR order must be >= 1")
        if not lo <= 0.0 <= hi:
            raise InvalidInputError("coefficient box must contain 0")
        slo, shi = self.sigma_bounds
        if not 0 < slo <= shi:
            raise InvalidInputError("sigma_e bounds must satisfy 0 < lo <= hi")

    @property
    def dim(self) -> int:
        return self.order + 1

    def _clip(self, x):
        x = np.asarray(x, dtype=float).copy()
        x[:-1] = np.clip(x[:-1], *self.coeff_bounds)
        x[-1] = np.clip(x[-1], *self.sigma_bounds)
        return x

    def project(self, x) -> np.ndarray:
        """Clip to the box, then shrink all AR zeros radially into the unit disc."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            raise InvalidInputError(f"AR design must be a finite vector of length {self.dim}")
        x = self._clip(x)
        a = x[:-1]
        roots = ar_roots(a)
        radius = float(np.max(np.abs(roots)))
        target = 1.0 - 1e-3
        if radius >= target:
            # scaling a_i by r^i scales every zero by r
            r = target / radius
            a = a * r ** np.arange(1, self.order + 1)
            x[:-1] = a
        return x

    def is_feasible(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        lo, hi = self.coeff_bounds
        slo, shi = self.sigma_bounds
        return bool(
            np.all(x[:-1] >= lo - tol) and np.all(x[:-1] <= hi + tol)
            and slo - tol <= x[-1] <= shi + tol and ar_is_stable(x[:-1])
        )

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Uniform draws over the feasible set by rejection from the box."""
        if size is not None:
            return np.vstack([self.sample(rng) for _ in range(size)])
        lo, hi = self.coeff_bounds
        for _ in range(10_000):
            a = rng.uniform(lo, hi, self.order)
            if ar_is_stable(a):
                break
        else:
            a = self.project(np.concatenate([a, [self.sigma_bounds[0]]]))[:-1]
        return np.concatenate([a, [rng.uniform(*self.sigma_bounds)]])

    def center(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.order), [0.5 * sum(self.sigma_bounds)]])

    def generate(self, params, T: int, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(params, dtype=float)
        return ar_generate(x[:-1], x[-1], T, rng)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "coeff_bounds": list(self.coeff_bounds),
            "sigma_bounds": list(self.sigma_bounds),
        }


def white_binary(rng: np.random.Generator, T: int) -> np.ndarray:
    """Binary white noise on {-1, 1}."""
    return rng.choice(np.array([-1.0, 1.0]), size=T)
