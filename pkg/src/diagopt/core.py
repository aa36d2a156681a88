"""Shared numeric primitives: vectors, the finite-sum oracle, and eval metering."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvexityConstants",
    "ComponentOracle",
    "EvalCounter",
    "MeteredOracle",
    "as_vector",
    "full_gradient",
    "objective_value",
    "finite_difference_gradient",
    "check_gradient",
    "check_strong_convexity",
    "check_lipschitz",
]


def as_vector(x, p: int | None = None, name: str = "x") -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array, optionally of length ``p``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if p is not None and arr.shape[0] != p:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {p}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ConvexityConstants:
    """Strong-convexity modulus ``mu`` and gradient Lipschitz constant ``L``.

    ``kappa`` and ``rho`` are derived on access so they can never drift from
    the pair they describe.
    """

    mu: float
    L: float

    def __post_init__(self):
        mu, L = float(self.mu), float(self.L)
        if not (math.isfinite(mu) and math.isfinite(L)):
            raise ValueError("mu and L must be finite")
        if mu <= 0:
            raise ValueError(f"mu must be positive, got {mu}")
        if L < mu:
            raise ValueError(f"L must be >= mu, got L={L}, mu={mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "L", L)

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def rho(self) -> float:
        # (L - mu) / (L + mu) avoids the cancellation in (kappa - 1)/(kappa + 1)
        return (self.L - self.mu) / (self.L + self.mu)


class ComponentOracle:
    """Base class for f(x) = (1/n) sum_i f_i(x).

    Subclasses set ``n``, ``p`` and ``constants`` and implement
    ``_value(i, x)`` / ``_gradient(i, x)`` with 0-based ``i`` on validated
    input. Vectorised subclasses may also override ``_all_gradients`` and
    ``_all_values``.

    Public methods take 0-based indices; error messages report the 1-based
    component number f_1..f_n.
    """

    n: int
    p: int
    constants: ConvexityConstants

    @property
    def aggregate_constants(self) -> ConvexityConstants:
        """Curvature bounds of the averaged objective (defaults to ``constants``)."""
        return self.constants

    def _check_index(self, i) -> int:
        if isinstance(i, (bool, np.bool_)) or not isinstance(i, (int, np.integer)):
            raise TypeError(f"component index must be an integer, got {type(i).__name__}")
        if not 0 <= i < self.n:
            raise IndexError(f"component f_{int(i) + 1} out of range (n={self.n})")
        return int(i)

    def component_value(self, i, x) -> float:
        i = self._check_index(i)
        return float(self._value(i, as_vector(x, self.p)))

    def component_gradient(self, i, x) -> np.ndarray:
        i = self._check_index(i)
        return self._gradient(i, as_vector(x, self.p))

    def all_gradients(self, x) -> np.ndarray:
        """Stack of every component gradient at ``x``, shape (n, p)."""
        return self._all_gradients(as_vector(x, self.p))

    def all_values(self, x) -> np.ndarray:
        return self._all_values(as_vector(x, self.p))

    def _all_gradients(self, x):
        return np.stack([self._gradient(i, x) for i in range(self.n)])

    def _all_values(self, x):
        return np.array([self._value(i, x) for i in range(self.n)])

    def _value(self, i, x):
        raise NotImplementedError

    def _gradient(self, i, x):
        raise NotImplementedError


class EvalCounter:
    """Gradient and function evaluation tallies; increments are serialised."""

    def __init__(self):
        self.gradient_evals = 0
        self.function_evals = 0
        self._lock = threading.Lock()

    def add_gradients(self, k: int = 1):
        with self._lock:
            self.gradient_evals += k

    def add_functions(self, k: int = 1):
        with self._lock:
            self.function_evals += k

    def __repr__(self):
        return f"EvalCounter(gradient_evals={self.gradient_evals}, function_evals={self.function_evals})"


class MeteredOracle(ComponentOracle):
    """Wraps an oracle and charges every evaluation to its own ``counter``.

    Solvers are handed a metered oracle so the cost accounting is identical
    across methods. ``unit_cost`` is the number of underlying component
    evaluations one call represents (``m`` for grouped oracles).
    """

    def __init__(self, oracle: ComponentOracle, counter: EvalCounter | None = None):
        self.base = oracle
        self.n = oracle.n
        self.p = oracle.p
        self.constants = oracle.constants
        self.counter = counter if counter is not None else EvalCounter()
        self.unit_cost = getattr(oracle, "unit_cost", 1)

    @property
    def aggregate_constants(self):
        return self.base.aggregate_constants

    def _value(self, i, x):
        self.counter.add_functions(self.unit_cost)
        return self.base._value(i, x)

    def _gradient(self, i, x):
        self.counter.add_gradients(self.unit_cost)
        return self.base._gradient(i, x)

    def _all_gradients(self, x):
        self.counter.add_gradients(self.unit_cost * self.n)
        return self.base._all_gradients(x)

    def _all_values(self, x):
        self.counter.add_functions(self.unit_cost * self.n)
        return self.base._all_values(x)


def full_gradient(oracle: ComponentOracle, x) -> np.ndarray:
    """Averaged gradient (1/n) sum_i grad f_i(x); charges n gradient evals."""
    return oracle.all_gradients(x).mean(axis=0)


def objective_value(oracle: ComponentOracle, x) -> float:
    return float(oracle.all_values(x).mean())


def finite_difference_gradient(oracle: ComponentOracle, i, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference approximation of grad f_i at ``x``."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    x = as_vector(x, oracle.p)
    out = np.empty(oracle.p)
    step = np.zeros(oracle.p)
    for j in range(oracle.p):
        step[j] = h
        out[j] = (oracle.component_value(i, x + step) - oracle.component_value(i, x - step)) / (2 * h)
        step[j] = 0.0
    return out


def _random_points(rng, count, p, scale):
    return scale * rng.standard_normal((count, p))


def check_gradient(oracle: ComponentOracle, points: int = 100, h: float = 1e-6,
                   rtol: float = 1e-5, seed: int = 0, scale: float = 1.0) -> float:
    """Largest normalised finite-difference mismatch over random (i, x) draws.

    Raises AssertionError when any draw exceeds ``rtol * (1 + |grad|)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in _random_points(rng, points, oracle.p, scale):
        i = int(rng.integers(oracle.n))
        g = oracle.component_gradient(i, x)
        fd = finite_difference_gradient(oracle, i, x, h)
        err = np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(g))
        worst = max(worst, err)
        if err > rtol:
            raise AssertionError(f"gradient of f_{i + 1} mismatches finite differences by {err:.3e}")
    return worst


def check_strong_convexity(oracle: ComponentOracle, pairs: int = 100, seed: int = 0,
                           slack: float = 1e-10, scale: float = 1.0) -> float:
    """Smallest (grad_i(x)-grad_i(y))^T(x-y) - mu|x-y|^2 over random pairs."""
    rng = np.random.default_rng(seed)
    mu = oracle.constants.mu
    worst = math.inf
    for _ in range(pairs):
        x, y = _random_points(rng, 2, oracle.p, scale)
        i = int(rng.integers(oracle.n))
        d = x - y
        margin = float((oracle.component_gradient(i, x) - oracle.component_gradient(i, y)) @ d - mu * d @ d)
        worst = min(worst, margin)
        if margin < -slack:
            raise AssertionError(f"f_{i + 1} violates strong convexity by {margin:.3e}")
    return worst


def check_lipschitz(oracle: ComponentOracle, pairs: int = 100, seed: int = 0,
                    rel_slack: float = 1e-10, scale: float = 1.0) -> float:
    """Largest |grad_i(x)-grad_i(y)| / (L|x-y|) over random pairs."""
    rng = np.random.default_rng(seed)
    L = oracle.constants.L
    worst = 0.0
    for _ in range(pairs):
        x, y = _random_points(rng, 2, oracle.p, scale)
        i = int(rng.integers(oracle.n))
        lhs = np.linalg.norm(oracle.component_gradient(i, x) - oracle.component_gradient(i, y))
        rhs = L * np.linalg.norm(x - y)
        worst = max(worst, lhs / rhs)
        if lhs > rhs * (1 + rel_slack):
            raise AssertionError(f"f_{i + 1} gradient exceeds Lipschitz bound ({lhs:.6e} > {rhs:.6e})")
    return worst
