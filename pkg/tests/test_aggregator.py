import warnings

import numpy as np
import pytest
from scipy.optimize import minimize

from rewardlab.aggregator import (
    LinearAggregator,
    aggregator_gradient,
    aggregator_objective,
    aggregator_train,
    balanced_class_weights,
)
from rewardlab.errors import ConvergenceWarning, ValidationError


def random_instance(rng, n=None, d=None):
    n = n or int(rng.integers(10, 200))
    d = d or int(rng.integers(1, 6))
    x = rng.random((n, d))
    y = (rng.random(n) < 0.5).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return x, y


class TestClassWeights:
    def test_documented_example(self):
        w0, w1 = balanced_class_weights(np.array([0, 0, 0, 1]))
        assert w0 == pytest.approx(4 / 6)
        assert w1 == pytest.approx(2.0)

    def test_balanced_data_unit_weights(self):
        w0, w1 = balanced_class_weights(np.array([0, 1, 0, 1]))
        assert (w0, w1) == (1.0, 1.0)

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            balanced_class_weights(np.ones(5))


class TestTraining:
    def test_single_predictive_attribute(self):
        x = np.array([[0.0], [0.05], [0.1], [0.9], [0.95], [1.0]])
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        agg = aggregator_train(x, y)
        assert agg.converged
        assert agg.weights[0] > 0
        assert np.array_equal((agg.score(x) > 0.5).astype(float), y)

    def test_gradient_norm_at_solution(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x, y = random_instance(rng)
            agg = aggregator_train(x, y)
            assert agg.converged
            assert np.linalg.norm(aggregator_gradient(agg, x, y)) <= 1e-8

    def test_matches_independent_convex_solver(self):
        # oracle: scipy BFGS on the same objective
        rng = np.random.default_rng(1)
        for _ in range(10):
            x, y = random_instance(rng, d=2)
            agg = aggregator_train(x, y)
            w0, w1 = agg.class_weights
            omega = np.where(y == 1, w1, w0)

            def objective(theta):
                z = x @ theta[:-1] + theta[-1]
                return 0.5 * theta[:-1] @ theta[:-1] + omega @ (np.logaddexp(0, z) - y * z)

            res = minimize(objective, np.zeros(x.shape[1] + 1), method="BFGS",
                           options={"gtol": 1e-10, "maxiter": 2000})
            mine = aggregator_objective(agg, x, y)
            assert mine <= res.fun + 1e-9
            np.testing.assert_allclose(
                np.append(agg.weights, agg.bias), res.x, rtol=1e-5, atol=1e-6
            )

    def test_beats_grid_on_2d(self):
        rng = np.random.default_rng(2)
        x, y = random_instance(rng, n=60, d=1)
        agg = aggregator_train(x, y)
        best = aggregator_objective(agg, x, y)
        grid = np.linspace(-6, 6, 81)
        for w in grid:
            for b in grid:
                other = LinearAggregator(np.array([w]), float(b), agg.class_weights)
                assert best <= aggregator_objective(other, x, y) + 1e-9

    def test_local_optimality_certificate(self):
        rng = np.random.default_rng(3)
        x, y = random_instance(rng, n=120, d=3)
        agg = aggregator_train(x, y)
        base = aggregator_objective(agg, x, y)
        for coord in range(4):
            for delta in (-1e-3, 1e-3):
                w = agg.weights.copy()
                b = agg.bias
                if coord < 3:
                    w[coord] += delta
                else:
                    b += delta
                perturbed = LinearAggregator(w, b, agg.class_weights)
                assert base <= aggregator_objective(perturbed, x, y) + 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        x, y = random_instance(rng)
        a = aggregator_train(x, y)
        b = aggregator_train(x, y)
        assert np.array_equal(a.weights, b.weights)
        assert a.bias == b.bias

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            aggregator_train(np.random.rand(5, 2), np.zeros(5))

    def test_iteration_cap_warns_and_returns(self):
        rng = np.random.default_rng(5)
        x, y = random_instance(rng, n=200, d=3)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            agg = aggregator_train(x, y, max_iter=1)
        assert not agg.converged
        assert any(issubclass(w.category, ConvergenceWarning) for w in caught)
        assert agg.weights.shape == (3,)

    def test_misaligned_inputs(self):
        with pytest.raises(ValidationError):
            aggregator_train(np.zeros((4, 2)), np.array([0.0, 1.0]))
        with pytest.raises(ValidationError):
            aggregator_train(np.zeros((2, 2)), np.array([0.5, 1.0]))


class TestScoring:
    def test_zero_weights_score_half(self):
        agg = LinearAggregator(np.zeros(3), 0.0, (1.0, 1.0))
        assert np.all(agg.score(np.random.rand(5, 3)) == 0.5)

    def test_monotone_in_positive_weight(self):
        agg = LinearAggregator(np.array([2.0, -1.0]), 0.1, (1.0, 1.0))
        lo = agg.score(np.array([0.2, 0.5]))
        hi = agg.score(np.array([0.6, 0.5]))
        assert hi > lo

    def test_width_mismatch(self):
        agg = LinearAggregator(np.zeros(3), 0.0, (1.0, 1.0))
        with pytest.raises(ValidationError):
            agg.score(np.random.rand(4, 2))
