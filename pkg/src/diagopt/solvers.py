"""First-order finite-sum methods over a common stepping interface.

Table-based methods defer the memory refresh at a new iterate (the gradient
of the component just visited) to the start of the following ``advance()``,
so the driver tests convergence on a freshly produced iterate before any
further gradient is charged, and the budget check sees every charge.

The single-step functions (``gd_step``, ``diag_step``, ...) run both phases
and are what the unit tests and naive-recompute comparisons exercise.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ComponentOracle, EvalCounter, MeteredOracle, as_vector, full_gradient

__all__ = [
    "METHODS",
    "GradientTable",
    "RunningSums",
    "SolverConfig",
    "TraceRecord",
    "Trace",
    "GroupedOracle",
    "group_components",
    "cyclic_index",
    "gd_step",
    "sgd_step",
    "iag_step",
    "sag_step",
    "diag_step",
    "finito_step",
    "make_solver",
    "resolve_stepsize",
    "run",
]

METHODS = ("gd", "sgd", "igd", "iag", "sag", "finito", "diag")
TABLE_METHODS = ("iag", "sag", "finito", "diag")
DIVERGENCE_THRESHOLD = 1e12


def cyclic_index(k: int, n: int) -> int:
    """0-based component visited at step k (components are numbered 1..n in messages)."""
    return k % n


class GradientTable:
    """Stored copies y_i and their gradients grad f_i(y_i).

    IAG/SAG never read the copies, so ``track_points=False`` skips them and
    halves the memory.
    """

    def __init__(self, oracle: ComponentOracle, x0, track_points: bool = True):
        x0 = as_vector(x0, oracle.p)
        self.stored_grads = np.array(oracle.all_gradients(x0), dtype=np.float64)
        self.y = np.tile(x0, (oracle.n, 1)) if track_points else None

    def replace(self, i: int, point, grad):
        if self.y is not None:
            self.y[i] = point
        self.stored_grads[i] = grad

    def exact_sums(self):
        v = self.y.sum(axis=0) if self.y is not None else None
        return v, self.stored_grads.sum(axis=0)


class RunningSums:
    """Tracked v = sum_i y_i and g = sum_i grad f_i(y_i).

    Both are refreshed from the table every ``refresh_period`` updates to
    wipe accumulated round-off.
    """

    def __init__(self, table: GradientTable, refresh_period: int):
        if refresh_period < 1:
            raise ValueError(f"refresh_period must be positive, got {refresh_period}")
        self.refresh_period = int(refresh_period)
        self.updates_since_refresh = 0
        self.refresh(table)

    def refresh(self, table: GradientTable):
        self.v, self.g = table.exact_sums()
        self.updates_since_refresh = 0

    def update(self, table: GradientTable, i: int, point, grad):
        """Swap component i's contribution, then write the table entry."""
        if self.v is not None:
            self.v = point - table.y[i] + self.v
        self.g = grad - table.stored_grads[i] + self.g
        table.replace(i, point, grad)
        self.updates_since_refresh += 1
        if self.updates_since_refresh >= self.refresh_period:
            self.refresh(table)


# -- single-step operations --------------------------------------------------

def gd_step(oracle: ComponentOracle, x, eps: float) -> np.ndarray:
    if not eps > 0:
        raise ValueError(f"stepsize must be positive, got {eps}")
    return x - eps * full_gradient(oracle, x)


def sgd_step(oracle: ComponentOracle, x, eps_k: float, batch) -> np.ndarray:
    """x - eps_k * (mean of the batch gradients); charges len(batch) evals."""
    batch = np.asarray(batch, dtype=np.intp).ravel()
    if batch.size == 0:
        raise ValueError("batch must contain at least one component index")
    grads = np.stack([oracle.component_gradient(int(i), x) for i in batch])
    return x - eps_k * grads.mean(axis=0)


def _aggregated_step(table, sums, oracle, x, eps, i):
    x_next = x - (eps / oracle.n) * sums.g
    sums.update(table, i, x_next, oracle.component_gradient(i, x_next))
    return x_next


def iag_step(table: GradientTable, sums: RunningSums, oracle: ComponentOracle, x, eps: float,
             i: int) -> np.ndarray:
    """x^{k+1} = x^k - (eps/n) g, then entry i is refreshed at x^{k+1}."""
    return _aggregated_step(table, sums, oracle, x, eps, i)


def sag_step(table: GradientTable, sums: RunningSums, oracle: ComponentOracle, x, eps: float,
             i: int) -> np.ndarray:
    """Same update as :func:`iag_step`; callers draw ``i`` uniformly."""
    return _aggregated_step(table, sums, oracle, x, eps, i)


def _double_aggregated_point(sums, n, eps):
    return sums.v / n - (eps / n) * sums.g


def diag_step(table: GradientTable, sums: RunningSums, oracle: ComponentOracle, eps: float,
              i: int) -> np.ndarray:
    """x^{k+1} = (1/n) v - (eps/n) g, then v, g and entry i are updated."""
    x_next = _double_aggregated_point(sums, oracle.n, eps)
    sums.update(table, i, x_next, oracle.component_gradient(i, x_next))
    return x_next


def finito_step(table: GradientTable, sums: RunningSums, oracle: ComponentOracle, eps: float,
                i: int) -> np.ndarray:
    """DIAG machinery with a uniformly drawn index ``i``."""
    return diag_step(table, sums, oracle, eps, i)


# -- grouping ----------------------------------------------------------------

class GroupedOracle(ComponentOracle):
    """Averages of ``m`` consecutive components, n/m components in total."""

    def __init__(self, oracle: ComponentOracle, m: int):
        if int(m) != m or m < 1:
            raise ValueError(f"group size must be a positive integer, got {m}")
        if oracle.n % m:
            raise ValueError(f"group size {m} does not divide n={oracle.n}")
        self.base = oracle
        self.m = int(m)
        self.n = oracle.n // self.m
        self.p = oracle.p
        self.constants = oracle.constants
        self.unit_cost = self.m * getattr(oracle, "unit_cost", 1)
        if hasattr(oracle, "x_star"):
            self.x_star = oracle.x_star

    @property
    def aggregate_constants(self):
        return self.base.aggregate_constants

    def _members(self, j):
        return range(j * self.m, (j + 1) * self.m)

    def _value(self, j, x):
        return sum(self.base._value(i, x) for i in self._members(j)) / self.m

    def _gradient(self, j, x):
        return np.mean([self.base._gradient(i, x) for i in self._members(j)], axis=0)

    def _all_values(self, x):
        return self.base._all_values(x).reshape(self.n, self.m).mean(axis=1)

    def _all_gradients(self, x):
        return self.base._all_gradients(x).reshape(self.n, self.m, self.p).mean(axis=1)


def group_components(oracle: ComponentOracle, m: int) -> ComponentOracle:
    """Merge consecutive components in groups of ``m`` (identity for m=1)."""
    if m == 1:
        return oracle
    return GroupedOracle(oracle, m)


# -- configuration -------------------------------------------------------------

@dataclass
class SolverConfig:
    """Run settings for one method.

    ``stepsize`` is ``"default"``, ``"diminishing"`` (eps_0 / k with
    eps_0 = ``stepsize_scale`` or 2/(mu+L)), or an explicit positive float.
    The per-method defaults are 2/(mu+L) for GD and DIAG, 2/(nL) for IAG,
    1/(16L) for SAG, 1/(2mu) for Finito and eps_0 / k for SGD and IGD.
    ``constants`` picks which (mu, L) feed the default stepsizes:
    ``"component"`` (per-component bounds) or ``"aggregate"`` (bounds of the
    averaged objective).
    """

    method: str = "diag"
    stepsize: object = "default"
    stepsize_scale: float | None = None
    batch_b: int = 1
    group_m: int = 1
    max_grad_evals: int | None = 1_000_000
    target_rel_err: float | None = 1e-6
    target_obj_gap: float | None = None
    seed: int = 0
    refresh_period: int | None = None
    constants: str = "component"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if isinstance(self.stepsize, str):
            if self.stepsize not in ("default", "diminishing"):
                raise ValueError(f"unknown stepsize policy {self.stepsize!r}")
        else:
            self.stepsize = float(self.stepsize)
            if not (math.isfinite(self.stepsize) and self.stepsize > 0):
                raise ValueError(f"explicit stepsize must be positive, got {self.stepsize}")
        if self.stepsize == "diminishing" and self.method in TABLE_METHODS:
            raise ValueError(f"{self.method} requires a constant stepsize")
        if self.constants not in ("component", "aggregate"):
            raise ValueError(f"constants must be 'component' or 'aggregate', got {self.constants!r}")
        if self.batch_b < 1:
            raise ValueError("batch_b must be positive")
        if self.group_m < 1:
            raise ValueError("group_m must be positive")
        if self.max_grad_evals is not None and self.max_grad_evals < 0:
            raise ValueError("max_grad_evals must be non-negative")
        if self.refresh_period is not None and self.refresh_period < 1:
            raise ValueError("refresh_period must be positive")

    def to_dict(self):
        return asdict(self)


def _constants_for(oracle, config):
    return oracle.aggregate_constants if config.constants == "aggregate" else oracle.constants


def resolve_stepsize(oracle: ComponentOracle, config: SolverConfig):
    """Return ``(eps, diminishing)``; with diminishing, step k uses eps / k."""
    c = _constants_for(oracle, config)
    if config.method in ("sgd", "igd"):
        if isinstance(config.stepsize, float):
            return config.stepsize, False
        eps0 = config.stepsize_scale if config.stepsize_scale is not None else 2.0 / (c.mu + c.L)
        return eps0, True
    if config.stepsize == "diminishing":
        eps0 = config.stepsize_scale if config.stepsize_scale is not None else 2.0 / (c.mu + c.L)
        return eps0, True
    if isinstance(config.stepsize, float):
        return config.stepsize, False
    defaults = {
        "gd": 2.0 / (c.mu + c.L),
        "diag": 2.0 / (c.mu + c.L),
        "iag": 2.0 / (oracle.n * c.L),
        "sag": 1.0 / (16.0 * c.L),
        "finito": 1.0 / (2.0 * c.mu),
    }
    return defaults[config.method], False


# -- stateful solvers used by the driver -------------------------------------

class _Solver:
    def __init__(self, oracle, x0, eps, diminishing, rng):
        self.oracle = oracle
        self.x = as_vector(x0, oracle.p).copy()
        self.eps = eps
        self.diminishing = diminishing
        self.rng = rng
        self.k = 0

    def stepsize(self):
        return self.eps / (self.k + 1) if self.diminishing else self.eps

    def next_cost(self) -> int:
        """Component-gradient evals charged before the next iterate exists."""
        raise NotImplementedError

    def advance(self):
        raise NotImplementedError

    def absorb(self):
        pass


class _GD(_Solver):
    def next_cost(self):
        return self.oracle.n * self.oracle.unit_cost

    def advance(self):
        self.x = gd_step(self.oracle, self.x, self.stepsize())
        self.k += 1
        return self.x


class _SGD(_Solver):
    def __init__(self, *args, batch_b=1, cyclic=False):
        super().__init__(*args)
        if batch_b > self.oracle.n:
            raise ValueError(f"batch size {batch_b} exceeds n={self.oracle.n}")
        self.batch_b = batch_b
        self.cyclic = cyclic

    def next_cost(self):
        b = 1 if self.cyclic else self.batch_b
        return b * self.oracle.unit_cost

    def draw_batch(self):
        if self.cyclic:
            return np.array([cyclic_index(self.k, self.oracle.n)])
        return np.sort(self.rng.choice(self.oracle.n, size=self.batch_b, replace=False))

    def advance(self):
        self.x = sgd_step(self.oracle, self.x, self.stepsize(), self.draw_batch())
        self.k += 1
        return self.x


class _Aggregated(_Solver):
    """Shared table machinery for IAG, SAG, DIAG and Finito."""

    double = False
    random_index = False

    def __init__(self, *args, refresh_period=None):
        super().__init__(*args)
        self.refresh_period = refresh_period or self.oracle.n
        self.table = None
        self.sums = None
        self.pending = None
        self.last_index = None

    def next_cost(self):
        if self.table is None:
            return self.oracle.n * self.oracle.unit_cost
        return self.oracle.unit_cost if self.pending is not None else 0

    def _init_memory(self):
        self.table = GradientTable(self.oracle, self.x, track_points=self.double)
        self.sums = RunningSums(self.table, self.refresh_period)

    def index(self):
        if self.random_index:
            return int(self.rng.integers(self.oracle.n))
        return cyclic_index(self.k, self.oracle.n)

    def advance(self):
        if self.table is None:
            self._init_memory()
        self.absorb()
        i = self.index()
        if self.double:
            x_next = _double_aggregated_point(self.sums, self.oracle.n, self.eps)
        else:
            x_next = self.x - (self.eps / self.oracle.n) * self.sums.g
        self.x = x_next
        self.pending = i
        self.last_index = i
        self.k += 1
        return x_next

    def absorb(self):
        if self.pending is None:
            return
        i, self.pending = self.pending, None
        self.sums.update(self.table, i, self.x, self.oracle.component_gradient(i, self.x))


class _IAG(_Aggregated):
    pass


class _SAG(_Aggregated):
    random_index = True


class _DIAG(_Aggregated):
    double = True


class _Finito(_Aggregated):
    double = True
    random_index = True


def make_solver(oracle: ComponentOracle, config: SolverConfig, x0):
    """Build the stateful solver for ``config`` on an already grouped oracle."""
    eps, diminishing = resolve_stepsize(oracle, config)
    rng = np.random.default_rng(config.seed)
    args = (oracle, x0, eps, diminishing, rng)
    method = config.method
    if method == "gd":
        return _GD(*args)
    if method == "sgd":
        return _SGD(*args, batch_b=config.batch_b)
    if method == "igd":
        return _SGD(*args, cyclic=True)
    cls = {"iag": _IAG, "sag": _SAG, "diag": _DIAG, "finito": _Finito}[method]
    return cls(*args, refresh_period=config.refresh_period)


# -- traces and the driver ---------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    k: int
    grad_evals: int
    rel_err: float
    obj_gap: float
    wall_ns: int


@dataclass
class Trace:
    method: str
    records: list = field(default_factory=list)
    status: str = "running"
    stepsize: float = float("nan")
    n: int = 0
    x_final: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def evals_to(self, rel_err=None, obj_gap=None):
        """Gradient evals at the first record meeting the threshold, else None."""
        for r in self.records:
            if rel_err is not None and r.rel_err <= rel_err:
                return r.grad_evals
            if obj_gap is not None and r.obj_gap <= obj_gap:
                return r.grad_evals
        return None

    def final(self):
        return self.records[-1] if self.records else None


def _default_x_star(oracle):
    x_star = getattr(oracle, "x_star", None)
    if x_star is not None:
        return np.asarray(x_star)
    from .problems import reference_minimizer

    return reference_minimizer(oracle)[0]


def run(oracle: ComponentOracle, config: SolverConfig, x0=None, x_star=None, f_star=None,
        record_limit: int = 10_000, callback=None) -> Trace:
    """Run one method until the target accuracy or the gradient budget.

    ``rel_err`` is |x^k - x*| / |x^0 - x*| and ``obj_gap`` is f(x^k) - f(x*).
    Records hold the gradient evals charged by the time each iterate exists.
    Every iterate is recorded until ``record_limit`` records, then only the
    first iterate of each pass. ``callback(k, x)`` sees every iterate.
    """
    if config.max_grad_evals is None:
        raise ValueError("max_grad_evals must be set before running")
    grouped = group_components(oracle, config.group_m)
    p = grouped.p
    x0 = np.zeros(p) if x0 is None else as_vector(x0, p, "x0")
    x_star = _default_x_star(oracle) if x_star is None else as_vector(x_star, p, "x_star")
    if f_star is None:
        f_star = float(oracle.all_values(x_star).mean())
    counter = EvalCounter()
    metered = MeteredOracle(grouped, counter)
    solver = make_solver(metered, config, x0)
    n_units = grouped.n
    stride = 1 if config.method == "gd" else n_units

    def objective(x):
        return float(oracle.all_values(x).mean())

    trace = Trace(method=config.method, stepsize=solver.eps, n=n_units)
    err0 = float(np.linalg.norm(x0 - x_star))

    def rel_err_of(x):
        dist = float(np.linalg.norm(x - x_star))
        return dist / err0 if err0 > 0 else (0.0 if dist == 0 else math.inf)

    elapsed = 0
    trace.records.append(TraceRecord(0, 0, rel_err_of(x0) if err0 > 0 else 0.0,
                                     objective(x0) - f_star, 0))
    if callback is not None:
        callback(0, x0)

    def converged(rel, gap_fn):
        if config.target_rel_err is not None and rel <= config.target_rel_err:
            return True
        if config.target_obj_gap is not None and gap_fn() <= config.target_obj_gap:
            return True
        return False

    status = None
    if converged(trace.records[0].rel_err, lambda: trace.records[0].obj_gap):
        status = "converged"
    x = x0
    while status is None:
        if counter.gradient_evals + solver.next_cost() > config.max_grad_evals:
            status = "budget_exhausted"
            break
        t0 = time.perf_counter_ns()
        x = solver.advance()
        elapsed += time.perf_counter_ns() - t0
        k = solver.k
        if callback is not None:
            callback(k, x)
        finite = bool(np.all(np.isfinite(x)))
        rel = rel_err_of(x) if finite else math.inf
        gap_cache = {}

        def gap():
            if "v" not in gap_cache:
                gap_cache["v"] = objective(x) - f_star if finite else math.inf
            return gap_cache["v"]

        if not finite or rel > DIVERGENCE_THRESHOLD:
            status = "diverged"
        elif converged(rel, gap):
            status = "converged"
        if status is not None or len(trace.records) < record_limit or (k - 1) % stride == 0:
            trace.records.append(TraceRecord(k, counter.gradient_evals, rel, gap(), elapsed))
        if status is not None:
            break
    trace.status = status
    trace.x_final = np.array(x)
    return trace
