"""scikit-learn style wrapper: L2-regularised logistic regression trained by
any of the incremental solvers.

The estimator scales features so the largest row has unit norm (which fixes
the smoothness constant), minimises the average regularised log-loss and
maps the weights back to the original feature scale. Training stops when the
full gradient norm, checked once per pass over the data, drops below ``tol``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .problems import LogisticProblem
from .solvers import DIVERGENCE_THRESHOLD, METHODS, SolverConfig, make_solver

__all__ = ["IncrementalLogisticRegression"]


class IncrementalLogisticRegression(ClassifierMixin, BaseEstimator):
    """Logistic regression with a finite-sum solver (one-vs-rest beyond two classes).

    Parameters
    ----------
    method : one of ``diag``, ``iag``, ``sag``, ``finito``, ``gd``, ``sgd``, ``igd``
    lam : float or ``"one_over_sqrt_n"``
        L2 weight applied to the scaled problem.
    fit_intercept : bool
        Append a constant feature; the intercept is regularised with the rest.
    stepsize : ``"default"``, ``"diminishing"`` or a positive float
    constants : ``"component"`` or ``"aggregate"``
        Which strong convexity and smoothness bounds set the default stepsize.
    tol : float
        Stop once the full gradient norm is at most ``tol``.
    max_passes : int
        Budget in component-gradient evaluations divided by n.
    random_state : int
        Seed for methods that sample components.
    """

    def __init__(self, method="diag", lam="one_over_sqrt_n", fit_intercept=True,
                 stepsize="default", constants="component", tol=1e-6,
                 max_passes=500, random_state=0):
        self.method = method
        self.lam = lam
        self.fit_intercept = fit_intercept
        self.stepsize = stepsize
        self.constants = constants
        self.tol = tol
        self.max_passes = max_passes
        self.random_state = random_state

    def _design(self, X):
        if self.fit_intercept:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need samples of at least 2 classes; got 1 class")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")

        D = self._design(X)
        scale = float(np.sqrt(np.einsum("ij,ij->i", D, D)).max())
        if not scale > 0:
            raise ValueError("feature matrix is identically zero")
        n = D.shape[0]
        self.lam_ = 1.0 / math.sqrt(n) if self.lam == "one_over_sqrt_n" else float(self.lam)
        # one-vs-rest: a single problem for two classes, one per class otherwise
        positives = self.classes_[1:] if self.classes_.size == 2 else self.classes_
        weights, self.n_iter_, self.converged_, self.grad_norm_ = [], [], [], []
        for cls in positives:
            signs = np.where(y == cls, 1.0, -1.0)
            x, info = self._solve(LogisticProblem(D / scale, signs, self.lam_), n)
            weights.append(x / scale)
            self.n_iter_.append(info[0])
            self.converged_.append(info[1])
            self.grad_norm_.append(info[2])
        W = np.array(weights)
        self.coef_ = W[:, : X.shape[1]]
        self.intercept_ = W[:, -1] if self.fit_intercept else np.zeros(len(W))
        self.n_iter_ = np.array(self.n_iter_)
        self.converged_ = bool(all(self.converged_))
        self.grad_norm_ = float(max(self.grad_norm_))
        return self

    def _solve(self, problem, n):
        config = SolverConfig(method=self.method, stepsize=self.stepsize,
                              constants=self.constants, seed=self.random_state,
                              max_grad_evals=None, target_rel_err=None)
        solver = make_solver(problem, config, np.zeros(problem.p))
        self.stepsize_ = solver.eps
        x = solver.x
        # a full-gradient step already costs one pass
        steps_per_pass = 1 if self.method == "gd" else n
        grad_norm = float(np.linalg.norm(problem.all_gradients(x).mean(axis=0)))
        converged = grad_norm <= self.tol
        for _ in range(0 if converged else self.max_passes):
            for _ in range(steps_per_pass):
                x = solver.advance()
            if not np.all(np.isfinite(x)) or np.abs(x).max() > DIVERGENCE_THRESHOLD:
                raise FloatingPointError(f"{self.method} diverged after {solver.k} steps")
            grad_norm = float(np.linalg.norm(problem.all_gradients(x).mean(axis=0)))
            if grad_norm <= self.tol:
                converged = True
                break
        if not converged:
            warnings.warn(f"{self.method} stopped at |grad|={grad_norm:.2e} after "
                          f"{self.max_passes} passes", ConvergenceWarning, stacklevel=3)
        return x, (solver.k, converged, grad_norm)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        scores = X @ self.coef_.T + self.intercept_
        return scores[:, 0] if self.classes_.size == 2 else scores

    def predict_proba(self, X):
        scores = self.decision_function(X)
        if self.classes_.size == 2:
            p1 = expit(scores)
            return np.column_stack([1.0 - p1, p1])
        # one-vs-rest probabilities, renormalised across classes
        probs = expit(scores)
        return probs / probs.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        scores = self.decision_function(X)
        if self.classes_.size == 2:
            return self.classes_[(scores > 0).astype(int)]
        return self.classes_[np.argmax(scores, axis=1)]
