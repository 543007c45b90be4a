import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DataError, DegenerateError, InputError
from src.kernels.gram_repository import Estimator, GramMatrix
from src.kernels.trace_kernels import FidelityKernel
from src.learning.svm import (SvmModel, accuracy, decision_function, dual_objective, kkt_violation, predict,
                              prepare_gram, svm_train, train_on_subset)
from src.quantum_utils.state_simulation import EmbeddingConfig


def qp_oracle(K: np.ndarray, y: np.ndarray, C: float) -> float:
    """
    Best dual objective over every assignment of the points to {alpha = 0, free, alpha = C}, solving the
    stationarity conditions of the free block exactly.
    """
    Q = np.outer(y, y) * K
    best = -np.inf
    for status in itertools.product((0, 1, 2), repeat=len(y)):
        free = [i for i, s in enumerate(status) if s == 1]
        bound = [i for i, s in enumerate(status) if s != 1]
        alpha = np.array([C if s == 2 else 0.0 for s in status])
        if free:
            system = np.zeros((len(free) + 1, len(free) + 1))
            system[:-1, :-1] = Q[np.ix_(free, free)]
            system[:-1, -1] = y[free]
            system[-1, :-1] = y[free]
            rhs = np.concatenate([1 - Q[np.ix_(free, bound)] @ alpha[bound], [-y[bound] @ alpha[bound]]])
            solution = np.linalg.lstsq(system, rhs, rcond=None)[0]
            if np.max(np.abs(system @ solution - rhs)) > 1e-9:
                continue
            alpha[free] = solution[:-1]
        if np.any(alpha < -1e-12) or np.any(alpha > C + 1e-12) or abs(alpha @ y) > 1e-9:
            continue
        best = max(best, dual_objective(alpha, K, y))
    return best


@pytest.fixture
def problem(rng):
    cfg = EmbeddingConfig(n=2, bandwidth=0.4)
    data = rng.uniform(-np.pi, np.pi, size=(8, 2))
    values = FidelityKernel(cfg).matrix(data)
    y = np.array([1, 1, 1, -1, -1, -1, 1, -1], dtype=float)
    return GramMatrix((values + values.T) / 2), y


class TestSvmTrain:
    """Dual SMO solutions against closed forms and an exhaustive oracle."""

    def test_two_point_problem(self):
        model = svm_train(np.eye(2), [1, -1], C=10)
        assert_allclose(model.alpha, [1.0, 1.0], atol=1e-9)
        assert model.b == pytest.approx(0.0, abs=1e-9)
        labels, scores = predict(model, np.eye(2))
        assert list(labels) == [1, -1]
        assert_allclose(scores * [1, -1], 1.0, atol=1e-9)

    @pytest.mark.parametrize("C", [0.1, 1.0, 5.0])
    def test_matches_exhaustive_oracle(self, problem, C):
        K, y = problem
        rows = np.arange(6)
        sub = GramMatrix(K.submatrix(rows))
        model = svm_train(sub, y[rows], C)
        assert dual_objective(model.alpha, sub, y[rows]) == pytest.approx(qp_oracle(sub.values, y[rows], C),
                                                                          abs=1e-6)

    def test_dual_feasibility_and_kkt(self, problem):
        K, y = problem
        model = svm_train(K, y, C=5.0)
        assert np.all(model.alpha >= 0) and np.all(model.alpha <= 5.0)
        assert abs(model.alpha @ y) <= 1e-8
        assert kkt_violation(model, K) <= 1e-6

    def test_free_support_vectors_sit_on_the_margin(self, problem):
        K, y = problem
        model = svm_train(K, y, C=5.0)
        scores = decision_function(model, K.values)
        for i in model.support:
            if model.alpha[i] < model.C - 1e-9:
                assert scores[i] * y[i] >= 1 - 1e-6

    def test_relabeling_permutation_invariance(self, problem):
        K, y = problem
        order = np.array([3, 0, 7, 1, 5, 2, 6, 4])
        model = svm_train(K, y, C=1.0)
        permuted = svm_train(GramMatrix(K.submatrix(order)), y[order], C=1.0)
        assert_allclose(decision_function(permuted, K.submatrix(order)), decision_function(model, K.values)[order],
                        atol=1e-6)

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateError):
            svm_train(np.eye(3), [1, 1, 1], C=1.0)

    def test_invalid_labels(self):
        with pytest.raises(InputError):
            svm_train(np.eye(2), [1, 0], C=1.0)

    @pytest.mark.parametrize("C", [0.0, -1.0])
    def test_invalid_box_parameter(self, C):
        with pytest.raises(InputError):
            svm_train(np.eye(2), [1, -1], C=C)

    def test_label_count_mismatch(self):
        with pytest.raises(InputError):
            svm_train(np.eye(3), [1, -1], C=1.0)


class TestPrepareGram:
    """PSD handling of exact and sampled Grams."""

    def test_non_psd_exact_gram_rejected(self):
        with pytest.raises(DataError):
            svm_train(np.array([[1.0, 2.0], [2.0, 1.0]]), [1, -1], C=1.0)

    def test_sampled_gram_is_clipped(self):
        K = GramMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]), estimator=Estimator.SHOT_NOISY, seed=0)
        assert prepare_gram(K).clipped
        assert prepare_gram(K, clip=False) is K

    def test_clipped_flag_reaches_model(self):
        K = GramMatrix(np.array([[1.0, 0.0, 1.2], [0.0, 1.0, 0.0], [1.2, 0.0, 1.0]]),
                       estimator=Estimator.SHADOWS, seed=0)
        assert svm_train(K, [1, -1, 1], C=1.0).clipped

    def test_non_finite_entries(self):
        with pytest.raises(InputError):
            prepare_gram(GramMatrix(np.array([[1.0, np.nan], [np.nan, 1.0]]), estimator=Estimator.SHADOWS))


class TestPredict:
    """Scores and labels on held-out kernel blocks."""

    def test_zero_block_scores_are_the_bias(self, problem):
        K, y = problem
        model = svm_train(K, y, C=1.0)
        _, scores = predict(model, np.zeros((3, 8)))
        assert_allclose(scores, model.b)

    def test_zero_score_maps_to_positive(self):
        model = SvmModel(alpha=np.zeros(2), b=0.0, C=1.0, y=np.array([1.0, -1.0]))
        labels, _ = predict(model, np.zeros((2, 2)))
        assert list(labels) == [1, 1]

    def test_column_mismatch(self):
        model = svm_train(np.eye(2), [1, -1], C=1.0)
        with pytest.raises(InputError):
            predict(model, np.zeros((1, 3)))

    def test_held_out_accuracy(self, problem):
        K, y = problem
        train, test = np.arange(6), np.arange(6, 8)
        model, score = train_on_subset(K, y, 5.0, train, test)
        assert score == accuracy(model, K.submatrix(test, train), y[test])

    def test_json_round_trip(self, problem):
        K, y = problem
        model = svm_train(K, y, C=1.0)
        restored = SvmModel.from_json(model.to_json())
        assert_allclose(decision_function(restored, K.values), decision_function(model, K.values))
