"""Theoretical linear-convergence factors for GD, IAG and DIAG.

The DIAG factor gamma0 is the unique root in [0, 1) of

    h(g) = g^(n+1) - (1 + rho/n) g^n + rho/n,

which is also the spectral radius of the n x n companion matrix M_rho of the
error-bound recurrence d^{k+1} = (rho/n)(d^k + ... + d^{k-n+1}).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "RateReport",
    "rho_of",
    "iag_factor",
    "sag_factor",
    "h_poly",
    "gamma0",
    "a0",
    "iterate_bound",
    "pass_bound",
    "BoundSequence",
    "bound_sequence",
    "companion_matrix",
    "spectral_radius",
    "power_of_root",
    "rate_report",
    "ratio_curves",
    "write_rate_reports",
    "RATE_COLUMNS",
    "SpectralRadiusError",
]


def _check_rho(rho):
    rho = float(rho)
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    return rho


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return int(n)


def rho_of(kappa: float) -> float:
    """GD contraction (kappa - 1)/(kappa + 1) at stepsize 2/(mu + L)."""
    kappa = float(kappa)
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if math.isinf(kappa):
        raise ValueError("kappa must be finite")
    return (kappa - 1.0) / (kappa + 1.0)


def iag_factor(n: int, kappa: float) -> float:
    """Per-iteration IAG factor 1 - 2 / (25 n (2n+1) (kappa+1)^2)."""
    n = _check_n(n)
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    return 1.0 - 2.0 / (25.0 * n * (2 * n + 1) * (kappa + 1.0) ** 2)


def sag_factor(n: int, kappa: float) -> float:
    """SAG's expected squared-error factor 1 - min(1/(16 kappa), 1/(8n)).

    Display only: the accompanying constant C_0 is unspecified.
    """
    return 1.0 - min(1.0 / (16.0 * kappa), 1.0 / (8.0 * n))


def power_of_root(gamma: float, n: int) -> float:
    """gamma**n via exp(n log gamma), exact at 0."""
    if gamma == 0.0:
        return 0.0
    return math.exp(n * math.log(gamma))


def h_poly(gamma: float, n: int, rho: float) -> float:
    """h(gamma), evaluated as gamma^n (gamma - 1) + (rho/n)(1 - gamma^n)."""
    n = _check_n(n)
    gamma = float(gamma)
    if gamma > 0:
        log_g = math.log(gamma)
        g_n = math.exp(n * log_g)
        one_minus = -math.expm1(n * log_g)
    elif gamma == 0:
        g_n, one_minus = 0.0, 1.0
    else:
        g_n = gamma ** n
        one_minus = 1.0 - g_n
    return g_n * (gamma - 1.0) + (rho / n) * one_minus


def _h_prime(gamma, n, rho):
    # (n+1) g^n - (n+rho) g^(n-1) = g^(n-1) ((n+1) g - (n+rho))
    if gamma == 0:
        return -(n + rho) if n == 1 else 0.0
    return math.exp((n - 1) * math.log(gamma)) * ((n + 1) * gamma - (n + rho))


def gamma0(n: int, rho: float, tol: float = 1e-13) -> float:
    """Unique root of ``h_poly`` in [0, 1).

    Bisection on [0, (n+rho)/(n+1)], where h changes sign, to width ``tol``;
    a few Newton steps then polish the root as long as they stay bracketed
    and shrink |h|.
    """
    n = _check_n(n)
    rho = _check_rho(rho)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if rho == 0.0:
        return 0.0
    lo, hi = 0.0, (n + rho) / (n + 1.0)
    # h(lo) > 0 > h(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if h_poly(mid, n, rho) > 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    best = abs(h_poly(root, n, rho))
    for _ in range(5):
        d = _h_prime(root, n, rho)
        if d == 0:
            break
        cand = root - h_poly(root, n, rho) / d
        if not lo <= cand <= hi:
            break
        val = abs(h_poly(cand, n, rho))
        if val >= best:
            break
        root, best = cand, val
    return root


def a0(n: int, rho: float, gamma: float) -> float:
    """max over i=1..n of rho (1 - (i-1)(1-rho)/n) gamma^(-i)."""
    n = _check_n(n)
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    i = np.arange(1, n + 1)
    terms = rho * (1.0 - (i - 1) * (1.0 - rho) / n) * np.exp(-i * math.log(gamma))
    return float(terms.max())


def iterate_bound(k: int, n: int, rho: float) -> float:
    """Multiplier of |x^0 - x*| bounding DIAG's error at iterate k >= 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = _check_n(n)
    if k <= n:
        return rho * (1.0 - (k - 1) * (1.0 - rho) / n)
    passes = (k - 1) // n + 1
    return rho ** passes * (1.0 - (1.0 - rho) / n * min(1.0, (n - 1) / 2.0))


def pass_bound(m: int, n: int, rho: float) -> float:
    """Error multiplier after m > 1 passes, i.e. at iterate n(m-1)+1."""
    if m < 2:
        raise ValueError("the pass bound holds for m >= 2")
    n = _check_n(n)
    return rho ** m * (1.0 - (1.0 - rho) / n * min(1.0, (n - 1) / 2.0))


@dataclass(frozen=True)
class BoundSequence:
    """d^0..d^K stored as ``scaled[k] * exp(log_scale[k])``.

    The recurrence decays geometrically, so long runs are kept in scaled
    form; ``values`` materialises plain floats (which may underflow to 0).
    """

    n: int
    rho: float
    scaled: np.ndarray
    log_scale: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.scaled * np.exp(self.log_scale)

    def ratios(self) -> np.ndarray:
        """d^{k+1} / d^k for k = 0..K-1 (inf where d^k = 0)."""
        num = self.scaled[1:] * np.exp(self.log_scale[1:] - self.log_scale[:-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.scaled[:-1] > 0, num / self.scaled[:-1], math.inf)

    def __len__(self):
        return len(self.scaled)


def bound_sequence(n: int, rho: float, d_init, K: int) -> BoundSequence:
    """d^0..d^K from d^{k+1} = (rho/n)(d^k + ... + d^{k-n+1}); d_init is d^0..d^{n-1}."""
    n = _check_n(n)
    d_init = np.asarray(d_init, dtype=np.float64)
    if d_init.shape != (n,):
        raise ValueError(f"d_init must hold {n} values")
    if np.any(d_init < 0) or not np.all(np.isfinite(d_init)):
        raise ValueError("d_init must be finite and non-negative")
    if K < n - 1:
        raise ValueError(f"K must be at least n-1={n - 1}")
    scaled = np.empty(K + 1)
    log_scale = np.zeros(K + 1)
    scaled[:n] = d_init
    window = d_init.copy()  # last n values, oldest first, in the current scale
    offset = 0.0
    for k in range(n, K + 1):
        nxt = rho * math.fsum(window) / n
        window[:-1] = window[1:]
        window[-1] = nxt
        top = window.max()
        if 0 < top < 1e-200:
            window /= top
            offset += math.log(top)
            nxt = window[-1]
        scaled[k] = nxt
        log_scale[k] = offset
    return BoundSequence(n, float(rho), scaled, log_scale)


def companion_matrix(n: int, rho: float) -> np.ndarray:
    """First row rho/n, ones on the subdiagonal, zeros elsewhere."""
    n = _check_n(n)
    M = np.zeros((n, n))
    M[0, :] = rho / n
    M[np.arange(1, n), np.arange(n - 1)] = 1.0
    return M


class SpectralRadiusError(RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def spectral_radius(M, tol: float = 1e-13, max_iter: int = 1_000_000) -> float:
    """Dominant eigenvalue of a non-negative irreducible matrix by power iteration.

    Starts from all-ones, normalises in max-norm every step, and stops when
    successive Rayleigh quotients differ by at most ``tol`` and the residual
    |M x - lam x| / |x| is at most ``tol``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if np.any(M < 0):
        raise ValueError("M must be entrywise non-negative")
    x = np.ones(M.shape[0])
    lam = math.nan
    for _ in range(max_iter):
        y = M @ x
        scale = np.abs(y).max()
        if scale == 0:
            return 0.0
        new_lam = float(x @ y) / float(x @ x)
        x = y / scale
        resid = float(np.linalg.norm(M @ x - new_lam * x) / np.linalg.norm(x))
        if abs(new_lam - lam) <= tol and resid <= tol:
            return new_lam
        lam = new_lam
    raise SpectralRadiusError(f"power iteration did not converge in {max_iter} steps", lam)


RATE_COLUMNS = ("n", "kappa", "rho", "gamma0", "a0", "lambda_star", "ratio", "root_residual",
                "gd_factor_per_pass", "iag_factor_per_iter", "iag_factor_per_pass")


@dataclass(frozen=True)
class RateReport:
    n: int
    kappa: float
    rho: float
    gamma0: float
    a0: float
    lambda_star: float
    ratio: float
    root_residual: float
    gd_factor_per_pass: float
    iag_factor_per_iter: float
    iag_factor_per_pass: float

    def as_row(self):
        return asdict(self)


def rate_report(n: int, kappa: float | None = None, rho: float | None = None,
                spectral: bool | None = None) -> RateReport:
    """Theoretical quantities for one (n, kappa) or (n, rho) pair.

    The spectral radius is computed by power iteration when ``spectral`` is
    true (default for n <= 400); otherwise ``lambda_star`` is NaN.
    """
    n = _check_n(n)
    if (kappa is None) == (rho is None):
        raise ValueError("supply exactly one of kappa and rho")
    if kappa is not None:
        rho = rho_of(kappa)
    else:
        rho = _check_rho(rho)
        kappa = (1 + rho) / (1 - rho)
    g = gamma0(n, rho)
    if spectral is None:
        spectral = n <= 400
    lam = spectral_radius(companion_matrix(n, rho)) if spectral and rho > 0 else (
        0.0 if rho == 0 else math.nan)
    iag = iag_factor(n, kappa)
    return RateReport(
        n=n, kappa=float(kappa), rho=rho, gamma0=g,
        a0=a0(n, rho, g) if g > 0 else math.nan,
        lambda_star=lam,
        ratio=power_of_root(g, n) / rho if rho > 0 else math.nan,
        root_residual=abs(h_poly(g, n, rho)),
        gd_factor_per_pass=rho,
        iag_factor_per_iter=iag,
        iag_factor_per_pass=power_of_root(iag, n),
    )


def ratio_curves(n_list, rho_values=None, kappa_values=None):
    """Rows (n, rho, kappa, gamma0, gamma0^n / rho) over a rho or kappa grid."""
    if (rho_values is None) == (kappa_values is None):
        raise ValueError("supply exactly one of rho_values and kappa_values")
    rows = []
    for n in n_list:
        if rho_values is not None:
            grid = [(_check_rho(r), (1 + r) / (1 - r)) for r in rho_values]
        else:
            grid = [(rho_of(k), float(k)) for k in kappa_values]
        for rho, kappa in grid:
            if rho == 0:
                raise ValueError("the ratio is undefined at rho = 0")
            g = gamma0(n, rho)
            rows.append({"n": int(n), "rho": rho, "kappa": kappa, "gamma0": g,
                         "ratio": power_of_root(g, n) / rho})
    return rows


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_rate_reports(reports, path):
    """Write RateReports (or ratio-curve rows) as CSV; returns the path."""
    path = Path(path)
    rows = [r.as_row() if isinstance(r, RateReport) else dict(r) for r in reports]
    columns = list(RATE_COLUMNS) if not rows or isinstance(reports[0], RateReport) else list(rows[0])
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(row[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write rates CSV {path}: {exc}") from exc
    return path
