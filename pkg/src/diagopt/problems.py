"""Concrete finite-sum problems: diagonal quadratics and regularised logistic loss."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .core import ComponentOracle, ConvexityConstants, as_vector

__all__ = [
    "QuadraticProblem",
    "QuadraticGenSpec",
    "generate_quadratic",
    "LogisticProblem",
    "Dataset",
    "build_logistic",
    "read_dataset",
    "make_logistic_data",
    "reference_minimizer",
]


class QuadraticProblem(ComponentOracle):
    """f_i(x) = 1/2 x^T diag(A_i) x + b_i^T x with every diag(A_i) positive.

    ``constants`` bound every component (min / max over all diagonal
    entries). ``aggregate_constants`` are the extreme eigenvalues of the
    mean Hessian, whose ratio is the condition number ``kappa_f``.
    """

    def __init__(self, diag_A, b):
        diag_A = np.array(diag_A, dtype=np.float64, ndmin=2)
        b = np.array(b, dtype=np.float64, ndmin=2)
        if diag_A.shape != b.shape:
            raise ValueError(f"diag_A shape {diag_A.shape} does not match b shape {b.shape}")
        if diag_A.ndim != 2 or diag_A.size == 0:
            raise ValueError("diag_A must be a non-empty (n, p) array")
        if not (np.all(np.isfinite(diag_A)) and np.all(np.isfinite(b))):
            raise ValueError("problem data must be finite")
        if np.any(diag_A <= 0):
            raise ValueError("every diagonal entry of A_i must be strictly positive")
        self.diag_A = diag_A
        self.b = b
        self.diag_A.setflags(write=False)
        self.b.setflags(write=False)
        self.n, self.p = diag_A.shape
        self.constants = ConvexityConstants(diag_A.min(), diag_A.max())
        mean_A = diag_A.mean(axis=0)
        self._aggregate = ConvexityConstants(mean_A.min(), mean_A.max())
        self.x_star = -b.sum(axis=0) / diag_A.sum(axis=0)
        self.x_star.setflags(write=False)
        residual = np.linalg.norm(mean_A * self.x_star + b.mean(axis=0))
        if residual > 1e-10 * (1 + np.linalg.norm(b)):
            raise ArithmeticError(f"closed-form minimizer residual {residual:.3e} too large")

    @property
    def aggregate_constants(self):
        return self._aggregate

    @property
    def kappa_f(self) -> float:
        return self._aggregate.kappa

    @property
    def f_star(self) -> float:
        return float(self._all_values(self.x_star).mean())

    def _value(self, i, x):
        return 0.5 * float(self.diag_A[i] @ (x * x)) + float(self.b[i] @ x)

    def _gradient(self, i, x):
        return self.diag_A[i] * x + self.b[i]

    def _all_values(self, x):
        return 0.5 * (self.diag_A @ (x * x)) + self.b @ x

    def _all_gradients(self, x):
        return self.diag_A * x + self.b

    def __repr__(self):
        return f"QuadraticProblem(n={self.n}, p={self.p}, kappa_f={self.kappa_f:.4g})"


@dataclass(frozen=True)
class QuadraticGenSpec:
    """Recipe for a random diagonal quadratic with controlled conditioning.

    The first p/2 diagonal entries of each A_i are drawn uniformly from
    {10^0, ..., 10^floor(eta)} and the last p/2 from {10^0, ..., 10^-floor(eta)};
    b_i is uniform on [0, 1]^p.
    """

    n: int
    p: int
    eta: float
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.p) != self.p or self.p < 2 or self.p % 2:
            raise ValueError(f"p must be a positive even integer, got {self.p}")
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    def with_seed(self, seed: int) -> "QuadraticGenSpec":
        return QuadraticGenSpec(self.n, self.p, self.eta, seed)


def generate_quadratic(spec: QuadraticGenSpec) -> QuadraticProblem:
    rng = np.random.default_rng(spec.seed)
    half = spec.p // 2
    exponents = np.arange(int(math.floor(spec.eta)) + 1)
    diag_A = np.empty((spec.n, spec.p))
    diag_A[:, :half] = 10.0 ** rng.choice(exponents, size=(spec.n, half))
    diag_A[:, half:] = 10.0 ** -rng.choice(exponents, size=(spec.n, half))
    b = rng.uniform(0.0, 1.0, size=(spec.n, spec.p))
    problem = QuadraticProblem(diag_A, b)
    problem.spec = spec
    return problem


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    source: str = "array"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must have one entry per feature row")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must lie in {-1, +1}")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]


class LogisticProblem(ComponentOracle):
    """f_i(x) = log(1 + exp(-l_i x^T u_i)) + (lam/2)|x|^2."""

    def __init__(self, features, labels, lam: float):
        U = np.array(features, dtype=np.float64, ndmin=2)
        labels = np.asarray(labels, dtype=np.float64)
        if U.shape[0] == 0:
            raise ValueError("dataset is empty")
        if labels.shape != (U.shape[0],) or not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be a length-n sequence over {-1, +1}")
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        self.features = U
        self.labels = labels
        self.lam = float(lam)
        self.n, self.p = U.shape
        self.zeta = float(np.max(np.einsum("ij,ij->i", U, U)))
        self.constants = ConvexityConstants(self.lam, self.lam + self.zeta / 4)
        # l_i u_i, the only way the data enters value and gradient
        self._signed = U * labels[:, None]
        self._signed.setflags(write=False)

    def _value(self, i, x):
        margin = float(self._signed[i] @ x)
        return float(np.logaddexp(0.0, -margin)) + 0.5 * self.lam * float(x @ x)

    def _gradient(self, i, x):
        margin = float(self._signed[i] @ x)
        return -expit(-margin) * self._signed[i] + self.lam * x

    def _all_values(self, x):
        return np.logaddexp(0.0, -(self._signed @ x)) + 0.5 * self.lam * float(x @ x)

    def _all_gradients(self, x):
        weights = expit(-(self._signed @ x))
        return -weights[:, None] * self._signed + self.lam * x

    def __repr__(self):
        return f"LogisticProblem(n={self.n}, p={self.p}, lam={self.lam:.4g})"


def build_logistic(dataset: Dataset, lam="one_over_sqrt_n") -> LogisticProblem:
    """Scale rows so the largest squared norm is 1, then build the loss.

    ``lam`` is a positive float or the policy string ``"one_over_sqrt_n"``.
    """
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    norms = np.sqrt(np.einsum("ij,ij->i", dataset.features, dataset.features))
    scale = norms.max()
    if not scale > 0:
        raise ValueError("feature matrix is identically zero; cannot normalise")
    if lam == "one_over_sqrt_n":
        lam = 1.0 / math.sqrt(dataset.n)
    elif isinstance(lam, str):
        raise ValueError(f"unknown lambda policy {lam!r}")
    return LogisticProblem(dataset.features / scale, dataset.labels, float(lam))


def _map_label(raw: str, label_map, lineno, path):
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: malformed label {raw!r}") from None
    if label_map is None:
        label_map = {-1: -1, 1: 1}
    for key, target in label_map.items():
        if float(key) == value:
            return float(target)
    return None


def read_dataset(path, fmt: str = "csv", label_map=None, header: bool = False,
                 n_features: int | None = None, skip_unmapped: bool = False) -> Dataset:
    """Read a labelled dataset.

    csv rows are ``label,feat1,...,featp``; libsvm rows are
    ``label idx:val ...`` with 1-based indices and absent entries read as 0.
    ``label_map`` maps raw numeric labels to -1/+1 (default: identity on
    {-1, +1}). Rows whose label is unmapped raise unless ``skip_unmapped``.
    """
    path = Path(path)
    if fmt not in ("csv", "libsvm"):
        raise ValueError(f"unknown dataset format {fmt!r}")
    for target in (label_map or {}).values():
        if float(target) not in (-1.0, 1.0):
            raise ValueError(f"label_map targets must be -1 or +1, got {target!r}")
    rows, labels = [], []
    with path.open(newline="") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            width = None
            for lineno, record in enumerate(reader, start=1):
                if header and lineno == 1:
                    continue
                if not record or all(not c.strip() for c in record):
                    continue
                label = _map_label(record[0].strip(), label_map, lineno, path)
                try:
                    values = [float(c) for c in record[1:]]
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed feature value") from None
                if width is None:
                    width = len(values)
                elif len(values) != width:
                    raise ValueError(f"{path}:{lineno}: expected {width} features, got {len(values)}")
                if label is None:
                    if skip_unmapped:
                        continue
                    raise ValueError(f"{path}:{lineno}: unknown label {record[0].strip()!r}")
                rows.append(values)
                labels.append(label)
            features = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
        else:
            sparse_rows = []
            max_index = 0
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                tokens = line.split()
                label = _map_label(tokens[0], label_map, lineno, path)
                entries = {}
                for tok in tokens[1:]:
                    idx, sep, val = tok.partition(":")
                    try:
                        j = int(idx)
                        v = float(val)
                    except ValueError:
                        j = 0
                    if not sep or j < 1:
                        raise ValueError(f"{path}:{lineno}: malformed entry {tok!r}")
                    entries[j - 1] = v
                    max_index = max(max_index, j)
                if label is None:
                    if skip_unmapped:
                        continue
                    raise ValueError(f"{path}:{lineno}: unknown label {tokens[0]!r}")
                sparse_rows.append(entries)
                labels.append(label)
            p = max_index if n_features is None else n_features
            if max_index > p:
                raise ValueError(f"{path}: feature index {max_index} exceeds n_features={p}")
            features = np.zeros((len(sparse_rows), p))
            for r, entries in enumerate(sparse_rows):
                for j, v in entries.items():
                    features[r, j] = v
    return Dataset(features, np.array(labels), source=fmt)


def make_logistic_data(n: int, p: int, seed: int = 0, noise: float = 0.5) -> Dataset:
    """Gaussian features with labels from a noisy random linear rule."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, p))
    w = rng.standard_normal(p)
    scores = U @ w / math.sqrt(p) + noise * rng.standard_normal(n)
    labels = np.where(scores >= 0, 1.0, -1.0)
    return Dataset(U, labels, source="synthetic")


def reference_minimizer(oracle: ComponentOracle, x0=None, grad_tol: float = 1e-12,
                        max_iter: int = 1_000_000):
    """Minimise with full gradient descent until |grad f| <= grad_tol.

    Returns ``(x_star, info)`` where ``info`` records how it was obtained.
    """
    x = np.zeros(oracle.p) if x0 is None else as_vector(x0, oracle.p).copy()
    c = oracle.constants
    eps = 2.0 / (c.mu + c.L)
    for it in range(max_iter + 1):
        grad = oracle.all_gradients(x).mean(axis=0)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            break
        x = x - eps * grad
    else:
        raise RuntimeError(f"reference solve stalled at |grad|={gnorm:.3e} after {max_iter} steps")
    info = {"method": "gd", "stepsize": eps, "iterations": it, "grad_norm": gnorm,
            "grad_tol": grad_tol}
    return x, info
