import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diagopt.core import (
    ConvexityConstants,
    EvalCounter,
    MeteredOracle,
    as_vector,
    check_gradient,
    check_lipschitz,
    check_strong_convexity,
    finite_difference_gradient,
    full_gradient,
    objective_value,
)
from diagopt.problems import (
    LogisticProblem,
    QuadraticGenSpec,
    QuadraticProblem,
    generate_quadratic,
)


class TestConstants:
    def test_derived_quantities(self):
        c = ConvexityConstants(1.0, 10.0)
        assert c.kappa == 10.0
        assert c.rho == pytest.approx(9 / 11, abs=1e-16)

    @pytest.mark.parametrize("mu, L", [(0.0, 1.0), (-1.0, 1.0), (2.0, 1.0), (math.nan, 1.0)])
    def test_rejects_invalid(self, mu, L):
        with pytest.raises(ValueError):
            ConvexityConstants(mu, L)

    @given(st.floats(1e-6, 1e6), st.floats(1.0, 1e6))
    def test_rho_in_unit_interval(self, mu, ratio):
        c = ConvexityConstants(mu, mu * ratio)
        assert 0.0 <= c.rho < 1.0
        assert c.kappa >= 1.0


class TestVector:
    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            as_vector([1.0, 2.0], p=3)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            as_vector([1.0, math.inf])

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            as_vector(np.ones((2, 2)))


class TestFullGradientAndObjective:
    def test_zero_gradient_at_minimiser_of_unbiased_quadratic(self):
        q = QuadraticProblem(np.ones((4, 3)) * [1, 2, 3], np.zeros((4, 3)))
        assert np.array_equal(full_gradient(q, np.zeros(3)), np.zeros(3))
        assert objective_value(q, np.zeros(3)) == 0.0

    def test_half_norm_gradient_and_value(self, half_norm):
        assert np.array_equal(full_gradient(half_norm, [2.0, -3.0]), [2.0, -3.0])
        assert objective_value(half_norm, [3.0, 4.0]) == 12.5

    def test_matches_independent_summation(self):
        q = generate_quadratic(QuadraticGenSpec(3, 4, 1, seed=11))
        x = np.array([0.3, -1.2, 2.0, 0.7])
        # independent oracle: accumulate each component by hand in one pass
        total = np.zeros(4)
        for i in range(q.n):
            total += [q.diag_A[i, j] * x[j] + q.b[i, j] for j in range(4)]
        expected = total / q.n
        got = full_gradient(q, x)
        assert np.linalg.norm(got - expected) <= 1e-12 * np.linalg.norm(expected)

    def test_logistic_zero_feature_value(self):
        lam = 0.3
        prob = LogisticProblem(np.zeros((2, 3)), [1.0, -1.0], lam)
        x = np.array([1.0, -2.0, 0.5])
        assert objective_value(prob, x) == pytest.approx(math.log(2) + 0.5 * lam * (x @ x), rel=1e-15)

    def test_dimension_mismatch_rejected(self, half_norm):
        with pytest.raises(ValueError):
            full_gradient(half_norm, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            objective_value(half_norm, [1.0])

    def test_index_errors_are_one_based(self, small_quadratic):
        with pytest.raises(IndexError, match="f_4"):
            small_quadratic.component_gradient(3, np.zeros(2))
        with pytest.raises(TypeError):
            small_quadratic.component_value(1.5, np.zeros(2))


class TestFiniteDifferences:
    def test_half_norm(self, half_norm):
        fd = finite_difference_gradient(half_norm, 0, [1.0, 1.0], h=1e-5)
        assert np.allclose(fd, [1.0, 1.0], atol=1e-8, rtol=0)

    def test_rejects_nonpositive_step(self, half_norm):
        with pytest.raises(ValueError):
            finite_difference_gradient(half_norm, 0, [1.0, 1.0], h=0.0)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.integers(0, 4))
    def test_logistic_matches_gradient(self, x, i):
        rng = np.random.default_rng(0)
        prob = LogisticProblem(rng.standard_normal((5, 3)) / 3, [1, -1, 1, 1, -1], 0.1)
        x = np.array(x)
        g = prob.component_gradient(i, x)
        fd = finite_difference_gradient(prob, i, x)
        assert fd.shape == (3,)
        assert np.linalg.norm(g - fd) <= 1e-5 * (1 + np.linalg.norm(g))


class TestAssumptionChecks:
    def test_quadratic_passes(self):
        q = generate_quadratic(QuadraticGenSpec(10, 6, 2, seed=3))
        check_gradient(q)
        check_strong_convexity(q)
        check_lipschitz(q)

    def test_detects_wrong_constants(self):
        q = QuadraticProblem([[1.0, 4.0]], [[0.0, 0.0]])
        q.constants = ConvexityConstants(1.0, 2.0)
        with pytest.raises(AssertionError):
            check_lipschitz(q)
        q.constants = ConvexityConstants(2.0, 4.0)
        with pytest.raises(AssertionError):
            check_strong_convexity(q)


class TestMetering:
    def test_one_gradient_per_component_call(self, small_quadratic):
        m = MeteredOracle(small_quadratic)
        m.component_gradient(0, np.zeros(2))
        assert m.counter.gradient_evals == 1
        full_gradient(m, np.zeros(2))
        assert m.counter.gradient_evals == 1 + small_quadratic.n
        objective_value(m, np.zeros(2))
        assert m.counter.function_evals == small_quadratic.n

    def test_counter_is_thread_safe(self):
        c = EvalCounter()
        threads = [threading.Thread(target=lambda: [c.add_gradients() for _ in range(1000)])
                   for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert c.gradient_evals == 8000
