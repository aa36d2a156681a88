"""Command-line entry point: ``diagopt {generate,solve,rates,compare}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import rates
from ..problems import QuadraticGenSpec, generate_quadratic
from ..solvers import METHODS, SolverConfig, run
from .config import ConfigError, ExperimentConfig, ProblemConfig, load_config
from .experiment import (
    OUTPUT_ENV_VAR,
    SeedSearchError,
    build_problem,
    default_output_dir,
    reference_solution,
    run_experiment,
    seed_search,
)
from .io import write_rows, write_trace

EXIT_OK, EXIT_DIVERGED, EXIT_USAGE = 0, 1, 2


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _stepsize(text):
    if text in ("default", "diminishing"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid stepsize {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diagopt",
        description="Incremental aggregated gradient solvers and their theoretical rates.",
        epilog=f"Output defaults to ${OUTPUT_ENV_VAR} or ./diagopt-output.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw a quadratic problem and report its constants")
    gen.add_argument("--n", type=int, default=200)
    gen.add_argument("--p", type=int, default=20)
    gen.add_argument("--eta", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--kappa", type=float, help="scan seeds for this kappa_f")
    gen.add_argument("--kappa-tol", type=float, default=0.1)
    gen.add_argument("--out", type=Path)

    solve = sub.add_parser("solve", help="run one solver on one problem")
    solve.add_argument("--config", type=Path, help="take the [problem] section from this file")
    solve.add_argument("--method", choices=METHODS, default="diag")
    solve.add_argument("--n", type=int, default=200)
    solve.add_argument("--p", type=int, default=20)
    solve.add_argument("--eta", type=float, default=1.0)
    solve.add_argument("--kappa", type=float, help="scan seeds for this kappa_f")
    solve.add_argument("--seed", type=int, default=0, help="problem seed and solver RNG seed")
    solve.add_argument("--stepsize", type=_stepsize, default="default")
    solve.add_argument("--constants", choices=("component", "aggregate"), default="component")
    solve.add_argument("--target-rel-err", type=float, default=1e-6)
    solve.add_argument("--max-grad-evals", type=int)
    solve.add_argument("--out", type=Path)

    rt = sub.add_parser("rates", help="theoretical factors for (n, kappa) grids")
    rt.add_argument("--n", type=_csv_list(int), required=True)
    rt.add_argument("--kappa", type=_csv_list(float))
    rt.add_argument("--rho", type=_csv_list(float))
    rt.add_argument("--curves", action="store_true", help="emit gamma0^n/rho ratio curves")
    rt.add_argument("--out", type=Path, help="write CSV here instead of stdout")

    cmp_ = sub.add_parser("compare", help="run a full experiment config")
    cmp_.add_argument("--config", type=Path, required=True)
    cmp_.add_argument("--out", type=Path)
    cmp_.add_argument("--seed", type=int, help="override the seed list with one seed")
    cmp_.add_argument("--target-rel-err", type=float)
    cmp_.add_argument("--max-grad-evals", type=int, help="budget for every solver")
    cmp_.add_argument("--method", choices=METHODS, help="run only solvers of this method")
    cmp_.add_argument("--stepsize", type=_stepsize, help="override every solver's stepsize")
    cmp_.add_argument("--jobs", type=int, default=1)
    return parser


def _cmd_generate(args):
    spec = QuadraticGenSpec(args.n, args.p, args.eta, args.seed)
    if args.kappa is not None:
        spec = seed_search(spec, args.kappa, args.kappa_tol)
    problem = generate_quadratic(spec)
    c, agg = problem.constants, problem.aggregate_constants
    info = {"n": spec.n, "p": spec.p, "eta": spec.eta, "seed": spec.seed,
            "mu": c.mu, "L": c.L, "kappa": c.kappa,
            "mu_aggregate": agg.mu, "L_aggregate": agg.L, "kappa_f": agg.kappa}
    text = json.dumps(info, indent=2)
    print(text)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "problem.json").write_text(text + "\n")
        np.savez(args.out / "problem.npz", diag_A=problem.diag_A, b=problem.b,
                 x_star=problem.x_star)
    return EXIT_OK


def _cmd_solve(args):
    if args.config:
        problem_cfg = load_config(args.config).problem
    else:
        problem_cfg = ProblemConfig(kind="quadratic", n=args.n, p=args.p, eta=args.eta,
                                    seed=args.seed, target_kappa=args.kappa)
    problem, meta = build_problem(problem_cfg)
    out = args.out or default_output_dir()
    x_star, _ = reference_solution(problem, out)
    budget = args.max_grad_evals if args.max_grad_evals is not None else 200 * problem.n
    cfg = SolverConfig(method=args.method, stepsize=args.stepsize, constants=args.constants,
                       target_rel_err=args.target_rel_err, max_grad_evals=budget, seed=args.seed)
    trace = run(problem, cfg, x_star=x_star)
    path = write_trace(trace, out / f"trace_{args.method}.csv")
    last = trace.final()
    print(f"{args.method}: {trace.status} k={last.k} grad_evals={last.grad_evals} "
          f"rel_err={last.rel_err:.3e} trace={path}")
    return EXIT_DIVERGED if trace.status == "diverged" else EXIT_OK


def _cmd_rates(args, parser):
    if (args.kappa is None) == (args.rho is None):
        parser.error("rates needs exactly one of --kappa and --rho")
    if args.curves:
        rows = rates.ratio_curves(args.n, rho_values=args.rho, kappa_values=args.kappa)
        columns = ["n", "rho", "kappa", "gamma0", "ratio"]
    else:
        rows = []
        for n in args.n:
            for value in (args.kappa or args.rho):
                kw = {"kappa": value} if args.kappa else {"rho": value}
                rows.append(rates.rate_report(n, **kw).as_row())
        columns = list(rates.RATE_COLUMNS)
    if args.out:
        write_rows(rows, args.out, columns)
    else:
        import csv
        from .io import format_value
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])
    return EXIT_OK


def _cmd_compare(args):
    config: ExperimentConfig = load_config(args.config)
    if args.seed is not None:
        config.seeds = [args.seed]
    if args.target_rel_err is not None:
        config.target_rel_err = args.target_rel_err
    if args.method:
        config.solvers = {k: v for k, v in config.solvers.items() if v.method == args.method}
    for cfg in config.solvers.values():
        if args.max_grad_evals is not None:
            cfg.max_grad_evals = args.max_grad_evals
        if args.stepsize is not None:
            cfg.stepsize = args.stepsize
            cfg.__post_init__()
    report = run_experiment(config, out_dir=args.out, jobs=args.jobs)
    for row in report.rows:
        print(f"{row['solver']:>10s} seed={row['seed']} {row['status']:<16s} "
              f"evals_to_target={row['grad_evals_to_target']}")
    return EXIT_OK if report.success else EXIT_DIVERGED


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "rates":
            return _cmd_rates(args, parser)
        return _cmd_compare(args)
    except (ConfigError, SeedSearchError, ValueError, OSError) as exc:
        print(f"diagopt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
