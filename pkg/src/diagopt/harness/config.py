"""Experiment configuration and its INI-style file format.

Grammar (``configparser`` syntax, ``#`` comments)::

    [experiment]
    name = quad-kappa10
    target_rel_err = 1e-6
    target_obj_gap =              # optional
    max_passes = 200              # budget per solver = max_passes * n
    seeds = 0, 1, 2               # one repetition per seed
    output_dir = results/quad     # optional; CLI --out overrides

    [problem]
    kind = quadratic              # quadratic | logistic | logistic_synthetic
    n = 200
    p = 20
    eta = 1
    seed = 0
    target_kappa = 10             # optional: scan seeds until kappa_f matches
    kappa_tolerance = 0.1         # relative
    max_tries = 10000

    [solver.diag]                 # one section per solver; suffix is its label
    method = diag                 # defaults to the label
    max_grad_evals =              # optional; default max_passes * n
    stepsize = default      # default | diminishing | <float>
    constants = aggregate
    refresh_period =              # optional
    ...

Logistic problems use ``dataset``, ``format``, ``header``, ``label_map``
(``8:1, 0:-1``), ``skip_unmapped`` and ``lambda`` (``one_over_sqrt_n`` or a
float); ``logistic_synthetic`` uses ``n``, ``p``, ``seed`` and ``lambda``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..solvers import SolverConfig

__all__ = ["ConfigError", "ProblemConfig", "ExperimentConfig", "load_config", "dump_config"]

PROBLEM_KINDS = ("quadratic", "logistic", "logistic_synthetic")


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass
class ProblemConfig:
    kind: str = "quadratic"
    n: int = 200
    p: int = 20
    eta: float = 1.0
    seed: int = 0
    target_kappa: float | None = None
    kappa_tolerance: float = 0.1
    max_tries: int = 10_000
    dataset: str | None = None
    format: str = "csv"
    header: bool = False
    label_map: dict | None = None
    skip_unmapped: bool = False
    lam: object = "one_over_sqrt_n"

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem kind must be one of {PROBLEM_KINDS}, got {self.kind!r}")
        if self.kind == "logistic" and not self.dataset:
            raise ConfigError("logistic problems need a dataset path")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    solvers: dict = field(default_factory=dict)  # label -> SolverConfig
    target_rel_err: float | None = 1e-6
    target_obj_gap: float | None = None
    max_passes: int = 200
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str | None = None

    def __post_init__(self):
        if self.max_passes < 0:
            raise ConfigError("max_passes must be non-negative")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for cfg in self.solvers.values():
            cfg.target_rel_err = self.target_rel_err
            cfg.target_obj_gap = self.target_obj_gap


# stopping targets are experiment-wide, so solver sections do not carry them
_SOLVER_FIELDS = {f.name: f for f in fields(SolverConfig)
                  if f.name not in ("target_rel_err", "target_obj_gap")}
_PROBLEM_FIELDS = {f.name: f for f in fields(ProblemConfig)}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return ", ".join(f"{k}:{v}" for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse_number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _opt(text, conv):
    text = text.strip()
    return None if text == "" else conv(text)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _label_map(text):
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        raw, _, target = item.partition(":")
        out[_parse_number(raw.strip())] = int(target)
    return out


def _stepsize(text):
    text = text.strip()
    if text in ("default", "diminishing"):
        return text
    return float(text)


def _lam(text):
    text = text.strip()
    return text if text == "one_over_sqrt_n" else float(text)


_PROBLEM_PARSERS = {
    "kind": str.strip, "n": int, "p": int, "eta": float, "seed": int,
    "target_kappa": lambda t: _opt(t, float), "kappa_tolerance": float, "max_tries": int,
    "dataset": lambda t: _opt(t, str.strip), "format": str.strip, "header": _bool,
    "label_map": lambda t: _opt(t, _label_map), "skip_unmapped": _bool, "lam": _lam,
}

_SOLVER_PARSERS = {
    "method": str.strip, "stepsize": _stepsize, "stepsize_scale": lambda t: _opt(t, float),
    "batch_b": int, "group_m": int, "max_grad_evals": lambda t: _opt(t, int),
    "seed": int, "refresh_period": lambda t: _opt(t, int), "constants": str.strip,
}

# file key -> attribute, where they differ
_PROBLEM_ALIASES = {"lambda": "lam"}


def load_config(source) -> ExperimentConfig:
    """Parse a config file path (or a file-like object) into an ExperimentConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    where = getattr(source, "name", "<config>") if hasattr(source, "read") else str(source)
    try:
        if hasattr(source, "read"):
            parser.read_file(source)
        else:
            path = Path(source)
            with path.open() as fh:
                parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{where}: cannot read config ({exc.strerror or exc})") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from exc

    def parse_section(section, parsers, aliases=None):
        values = {}
        for key, raw in parser.items(section):
            attr = (aliases or {}).get(key, key)
            if attr not in parsers:
                raise ConfigError(f"{where}: [{section}] unknown key {key!r}")
            try:
                values[attr] = parsers[attr](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: [{section}] {key}: {exc}") from exc
        return values

    exp_parsers = {
        "name": str.strip, "target_rel_err": lambda t: _opt(t, float),
        "target_obj_gap": lambda t: _opt(t, float), "max_passes": int,
        "seeds": lambda t: [int(s) for s in t.split(",") if s.strip()],
        "output_dir": lambda t: _opt(t, str.strip),
    }
    exp_values = parse_section("experiment", exp_parsers) if parser.has_section("experiment") else {}
    prob_values = (parse_section("problem", _PROBLEM_PARSERS, _PROBLEM_ALIASES)
                   if parser.has_section("problem") else {})
    try:
        problem = ProblemConfig(**prob_values)
    except ConfigError as exc:
        raise ConfigError(f"{where}: [problem] {exc}") from exc
    solvers = {}
    for section in parser.sections():
        if section in ("experiment", "problem"):
            continue
        if not section.startswith("solver."):
            raise ConfigError(f"{where}: unknown section [{section}]")
        label = section[len("solver."):]
        values = parse_section(section, _SOLVER_PARSERS)
        values.setdefault("method", label)
        values.setdefault("max_grad_evals", None)
        try:
            solvers[label] = SolverConfig(**values)
        except ValueError as exc:
            raise ConfigError(f"{where}: [{section}] {exc}") from exc
    return ExperimentConfig(problem=problem, solvers=solvers, **exp_values)


def dump_config(config: ExperimentConfig) -> str:
    """Serialise to the file grammar; ``load_config`` reverses it exactly."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {
        "name": config.name,
        "target_rel_err": _fmt(config.target_rel_err),
        "target_obj_gap": _fmt(config.target_obj_gap),
        "max_passes": _fmt(config.max_passes),
        "seeds": _fmt(config.seeds),
        "output_dir": _fmt(config.output_dir),
    }
    prob = {}
    for name in _PROBLEM_FIELDS:
        key = "lambda" if name == "lam" else name
        prob[key] = _fmt(getattr(config.problem, name))
    parser["problem"] = prob
    for label, cfg in config.solvers.items():
        sec = {}
        for name in _SOLVER_FIELDS:
            sec[name] = _fmt(getattr(cfg, name))
        parser[f"solver.{label}"] = sec
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
