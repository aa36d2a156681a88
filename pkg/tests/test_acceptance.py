"""Acceptance gate: fourteen end-to-end checks, each with a runtime budget.

Every check prints one ``PASS``/``FAIL`` line; pytest also repeats the lines
in its terminal summary. Run standalone with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import csv
import functools
import io
import math
import sys
import time
from pathlib import Path

import numpy as np

from diagopt.core import check_gradient
from diagopt.harness import ExperimentConfig, ProblemConfig, run_experiment, seed_search
from diagopt.harness.cli import main as cli_main
from diagopt.problems import (
    QuadraticGenSpec,
    QuadraticProblem,
    build_logistic,
    generate_quadratic,
    make_logistic_data,
    reference_minimizer,
)
from diagopt.rates import (
    a0,
    bound_sequence,
    companion_matrix,
    gamma0,
    spectral_radius,
)
from diagopt.solvers import SolverConfig, gd_step, resolve_stepsize, run

N_GRID = (2, 3, 5, 10, 50, 200)
RHO_GRID = (0.1, 0.3, 0.5, 0.8, 0.9, 0.99)

RESULTS: dict[int, str] = {}


def criterion(number, title, budget_s):
    """Time ``check`` (which returns ``(ok, detail)``), record and print a line."""
    def decorate(check):
        @functools.wraps(check)
        def test(*args, **kwargs):
            start = time.perf_counter()
            try:
                ok, detail = check(*args, **kwargs)
            except Exception as exc:  # a crash is a failed criterion, reported as such
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            elapsed = time.perf_counter() - start
            in_time = elapsed < budget_s
            verdict = "PASS" if ok and in_time else "FAIL"
            timing = f"{elapsed:.2f}s/{budget_s:g}s" + ("" if in_time else " OVER BUDGET")
            line = f"[{verdict}] {number:2d}. {title} ({timing}): {detail}"
            RESULTS[number] = line
            print(line)
            assert ok, line
            assert in_time, line
        return test
    return decorate


def cli_rows(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main(argv)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    return code, rows


@criterion(1, "golden gamma0 values from the rates command", 1)
def test_01_golden_roots():
    code_a, rows_a = cli_rows(["rates", "--n", "200", "--kappa", "10"])
    code_b, rows_b = cli_rows(["rates", "--n", "200", "--rho", str(116 / 118)])
    g_a, g_b = float(rows_a[0]["gamma0"]), float(rows_b[0]["gamma0"])
    ok = code_a == code_b == 0 and abs(g_a - 0.998067) <= 1e-6 and abs(g_b - 0.99983) <= 1e-5
    return ok, f"gamma0={g_a:.7f} (want 0.998067), gamma0={g_b:.6f} (want 0.99983)"


@criterion(2, "root sandwich rho <= gamma0, gamma0^n < rho", 5)
def test_02_sandwich():
    bad = [(n, rho) for n in N_GRID for rho in RHO_GRID
           if not (rho <= gamma0(n, rho) and gamma0(n, rho) ** n < rho)]
    return not bad, f"{len(N_GRID) * len(RHO_GRID)} grid points, violations={bad}"


@criterion(3, "gamma0 equals the companion-matrix spectral radius", 30)
def test_03_spectral_radius():
    worst = max(abs(gamma0(n, rho) - spectral_radius(companion_matrix(n, rho), tol=1e-13))
                for n in N_GRID if n <= 50 for rho in RHO_GRID)
    return worst <= 1e-8, f"max |gamma0 - lambda*| = {worst:.2e} (tol 1e-8)"


@criterion(4, "bound-sequence ratio tends to gamma0", 5)
def test_04_asymptotic_ratio():
    k = 10_000
    worst = 0.0
    for n in (3, 10):
        for rho in (0.5, 0.9):
            ratio = bound_sequence(n, rho, np.ones(n), k + 1).ratios()[k]
            worst = max(worst, abs(ratio - gamma0(n, rho)))
    return worst <= 1e-6, f"max |d^(k+1)/d^k - gamma0| at k=1e4: {worst:.2e} (tol 1e-6)"


@criterion(5, "GD contracts by exactly 9/11 on diag(1, 10)", 1)
def test_05_gd_tightness():
    q = QuadraticProblem([[1.0, 10.0]], [[0.0, 0.0]])
    x0 = np.array([1.0, 1.0])
    x, worst = x0, 0.0
    for k in range(1, 101):
        x = gd_step(q, x, 2 / 11)
        expected = (9 / 11) ** k * np.linalg.norm(x0)
        worst = max(worst, abs(np.linalg.norm(x) - expected) / expected)
    return worst <= 1e-12, f"max relative deviation over k<=100: {worst:.2e}"


def _contraction_instance():
    # per-component constants, stepsize 2/(mu+L): the setting of the per-step analysis
    problem = generate_quadratic(QuadraticGenSpec(20, 10, 1, seed=2024))
    config = SolverConfig("diag", constants="component", target_rel_err=None,
                          max_grad_evals=20 + 50 * 20 - 1)
    return problem, config


@criterion(6, "DIAG error contracts against the mean of the last n errors", 5)
def test_06_contraction():
    problem, config = _contraction_instance()
    errs = []
    run(problem, config, callback=lambda k, x: errs.append(np.linalg.norm(x - problem.x_star)))
    n, rho = problem.n, problem.constants.rho
    worst = -math.inf
    for k in range(n, len(errs) - 1):
        worst = max(worst, errs[k + 1] - (rho * np.mean(errs[k - n + 1:k + 1]) + 1e-10))
    steps = len(errs) - 1
    return worst <= 0 and steps >= 50 * n, f"{steps} steps, max excess {worst:.2e} (must be <= 0)"


@criterion(7, "DIAG stays under the a0 gamma0^k envelope", 5)
def test_07_envelope():
    problem, config = _contraction_instance()
    n, rho = problem.n, problem.constants.rho
    g = gamma0(n, rho)
    a = a0(n, rho, g)
    trace = run(problem, config)
    excess = [r.rel_err / (a * g ** r.k) for r in trace.records if r.k >= 1]
    worst = max(excess)
    return worst <= 1 + 1e-9, f"{len(excess)} records, max rel_err/(a0 gamma0^k) = {worst:.6f}"


@criterion(8, "quadratic experiment: DIAG <= 0.65 GD and <= IAG in gradient evals", 60)
def test_08_quadratic_experiment():
    spec = seed_search(QuadraticGenSpec(200, 20, 1, seed=0), 10.0, tolerance=0.1)
    problem = generate_quadratic(spec)
    evals = {}
    for method in ("gd", "iag", "diag"):
        # stepsizes from the mean Hessian, whose condition number is kappa_f
        cfg = SolverConfig(method, constants="aggregate", target_rel_err=1e-6,
                           max_grad_evals=200 * problem.n)
        evals[method] = run(problem, cfg).evals_to(rel_err=1e-6)
    if None in evals.values():
        return False, f"a solver missed the target: {evals}"
    ratio = evals["diag"] / evals["gd"]
    ok = 9 <= problem.kappa_f <= 11 and ratio <= 0.65 and evals["diag"] <= evals["iag"]
    return ok, (f"seed {spec.seed}, kappa_f={problem.kappa_f:.3f}: GD {evals['gd']}, "
                f"IAG {evals['iag']}, DIAG {evals['diag']} (DIAG/GD={ratio:.3f})")


@criterion(9, "DIAG and GD coincide when n = 1", 1)
def test_09_single_component():
    q = QuadraticProblem([[2.0, 0.3, 7.0]], [[0.1, 0.9, 0.4]])
    seqs = {}
    for method in ("diag", "gd"):
        xs = []
        run(q, SolverConfig(method, target_rel_err=None, max_grad_evals=1000),
            callback=lambda k, x: xs.append(np.array(x)))
        seqs[method] = xs
    same = len(seqs["diag"]) == len(seqs["gd"]) == 1001 and all(
        np.array_equal(a, b) for a, b in zip(seqs["diag"], seqs["gd"]))
    return same, f"{len(seqs['diag']) - 1} DIAG steps vs {len(seqs['gd']) - 1} GD steps, bitwise equal={same}"


def _naive(problem, eps, steps, double):
    n = problem.n
    x = np.zeros(problem.p)
    y = [x.copy() for _ in range(n)]
    out = []
    for k in range(steps):
        grad_sum = sum(problem.diag_A[i] * y[i] + problem.b[i] for i in range(n))
        x = (sum(y) / n if double else x) - (eps / n) * grad_sum
        y[k % n] = x.copy()
        out.append(x)
    return out


@criterion(10, "running sums match naive recomputation (DIAG and IAG)", 1)
def test_10_oracle_equivalence():
    problem = generate_quadratic(QuadraticGenSpec(3, 2, 1, seed=10))
    worst = {}
    for method, double in (("diag", True), ("iag", False)):
        cfg = SolverConfig(method, target_rel_err=None, max_grad_evals=3 + 50 - 1)
        xs = []
        run(problem, cfg, callback=lambda k, x: xs.append(np.array(x)))
        eps = resolve_stepsize(problem, cfg)[0]
        naive = _naive(problem, eps, 50, double)
        worst[method] = max(np.linalg.norm(a - b) / np.linalg.norm(b) for a, b in zip(xs[1:], naive))
        if len(xs) != 51:
            return False, f"{method} produced {len(xs) - 1} steps, expected 50"
    ok = all(w <= 1e-12 for w in worst.values())
    return ok, ", ".join(f"{m} max rel diff {w:.1e}" for m, w in worst.items())


@criterion(11, "component gradients pass finite-difference checks", 5)
def test_11_gradients():
    quad = generate_quadratic(QuadraticGenSpec(30, 10, 2, seed=11))
    logi = build_logistic(make_logistic_data(100, 10, seed=11))
    wq = check_gradient(quad, points=100, rtol=1e-5, seed=1)
    wl = check_gradient(logi, points=100, rtol=1e-5, seed=2, scale=3.0)
    return True, f"worst normalised mismatch: quadratic {wq:.1e}, logistic {wl:.1e} (tol 1e-5)"


@criterion(12, "logistic run: DIAG needs fewer gradient evals than GD", 60)
def test_12_logistic():
    problem = build_logistic(make_logistic_data(1000, 20, seed=12), "one_over_sqrt_n")
    x_star, info = reference_minimizer(problem, grad_tol=1e-12)
    f_star = float(problem.all_values(x_star).mean())
    evals = {}
    for method in ("gd", "diag"):
        cfg = SolverConfig(method, target_rel_err=None, target_obj_gap=1e-8,
                           max_grad_evals=500 * problem.n)
        evals[method] = run(problem, cfg, x_star=x_star, f_star=f_star).evals_to(obj_gap=1e-8)
    ok = None not in evals.values() and evals["diag"] < evals["gd"]
    return ok, (f"lambda={problem.lam:.4g}: GD {evals['gd']}, DIAG {evals['diag']} "
                f"evals to obj_gap 1e-8")


@criterion(13, "(1 - phi/n)^n is non-decreasing in n", 1)
def test_13_power_inequality():
    bad = [(phi, n) for phi in np.round(np.arange(0, 1.05, 0.1), 10) for n in range(1, 101)
           if (1 - phi / n) ** n > (1 - phi / (n + 1)) ** (n + 1)]
    return not bad, f"11 x 100 grid, violations={bad[:5]}"


def _strip_wall_time(path: Path) -> bytes:
    lines = path.read_bytes().splitlines(keepends=True)
    return b"".join(line.rsplit(b",", 1)[0] + b"\n" for line in lines)


@criterion(14, "seeded experiments reproduce trace files byte for byte", 60)
def test_14_determinism(tmp_path):
    solvers = {m: SolverConfig(m, max_grad_evals=None, batch_b=2 if m == "sgd" else 1)
               for m in ("gd", "sgd", "igd", "iag", "sag", "finito", "diag")}
    config = ExperimentConfig(name="det", problem=ProblemConfig(n=30, p=6, eta=1, seed=4),
                              solvers=solvers, max_passes=40, seeds=[0, 7])
    run_experiment(config, tmp_path / "a")
    run_experiment(config, tmp_path / "b", jobs=4)
    files = sorted(p.name for p in (tmp_path / "a").glob("trace_*.csv"))
    differing = [f for f in files
                 if _strip_wall_time(tmp_path / "a" / f) != _strip_wall_time(tmp_path / "b" / f)]
    ok = len(files) == 14 and not differing
    return ok, f"{len(files)} trace files compared, differing={differing}"


if __name__ == "__main__":
    import tempfile

    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            args = [Path(tempfile.mkdtemp())] if fn.__wrapped__.__code__.co_argcount else []
            try:
                fn(*args)
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
