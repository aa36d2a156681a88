"""Double incremental aggregated gradient (DIAG) and baseline finite-sum solvers."""

from .core import (
    ComponentOracle,
    ConvexityConstants,
    EvalCounter,
    MeteredOracle,
    finite_difference_gradient,
    full_gradient,
    objective_value,
)
from .estimators import IncrementalLogisticRegression
from .problems import (
    Dataset,
    LogisticProblem,
    QuadraticGenSpec,
    QuadraticProblem,
    build_logistic,
    generate_quadratic,
    read_dataset,
)
from .rates import gamma0, rate_report
from .solvers import SolverConfig, Trace, group_components, run

__version__ = "0.1.0"

__all__ = [
    "ComponentOracle",
    "ConvexityConstants",
    "EvalCounter",
    "MeteredOracle",
    "finite_difference_gradient",
    "full_gradient",
    "objective_value",
    "IncrementalLogisticRegression",
    "Dataset",
    "LogisticProblem",
    "QuadraticGenSpec",
    "QuadraticProblem",
    "build_logistic",
    "generate_quadratic",
    "read_dataset",
    "gamma0",
    "rate_report",
    "SolverConfig",
    "Trace",
    "group_components",
    "run",
]
