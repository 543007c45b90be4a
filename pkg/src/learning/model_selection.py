"""
Cross-validated choice of the SVM box parameter and the feature-count generalization-gap experiment.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from src.errors import InputError
from src.kernels.gram_repository import Estimator, GramMatrix
from src.kernels.trace_kernels import weighted_gram
from src.learning.bounds import BoundInputs, rademacher_bound
from src.learning.svm import accuracy, prepare_gram, svm_train, train_on_subset
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)

GAP_TABLE_HEADER = ("p", "N", "seed", "train_risk", "test_risk", "gap")


def stratified_folds(y, folds: int, seed: int) -> List[np.ndarray]:
    """
    Each class is shuffled with the seeded generator, the classes are concatenated and indices are dealt to the folds
    round-robin, so fold sizes differ by at most one and folds = N is leave-one-out.
    """
    labels = np.asarray(y)
    if folds < 2:
        raise InputError(f"At least two folds are needed, got {folds}.")
    if folds > labels.shape[0]:
        raise InputError(f"Cannot split {labels.shape[0]} points into {folds} folds.")
    rng = np.random.default_rng(seed)
    ordered = np.concatenate([rng.permutation(np.flatnonzero(labels == label)) for label in np.unique(labels)])
    return [np.sort(ordered[fold::folds]) for fold in range(folds)]


@dataclass(frozen=True)
class CrossValidationResult:
    best_C: float
    accuracies: Dict[float, float]
    fold_accuracies: Dict[float, List[float]] = field(default_factory=dict)


def cross_validate(K, y, c_grid: Sequence[float], folds: int = 10, seed: int = 0) -> CrossValidationResult:
    """
    :param K: N x N training Gram matrix; sampled Grams are clipped to the PSD cone once up front.
    :param y: labels in {-1, +1}.
    :param c_grid: candidate box parameters.
    :param folds: fold count, 2 <= folds <= N.
    :param seed: fold-assignment seed.
    :return: C with the highest mean validation accuracy, ties broken toward the smaller C.
    """
    if len(c_grid) == 0:
        raise InputError("The C grid is empty.")
    K = prepare_gram(K)
    labels = np.asarray(y)
    if labels.shape[0] != K.size:
        raise InputError(f"Gram matrix has {K.size} rows for {labels.shape[0]} labels.")
    splits = stratified_folds(labels, folds, seed)
    everything = np.arange(labels.shape[0])
    for fold, held_out in enumerate(splits):
        if np.unique(labels[np.setdiff1d(everything, held_out)]).size < 2:
            raise InputError(f"Training split of fold {fold} lacks one of the classes; use fewer folds.")

    tasks = [(C, np.setdiff1d(everything, held_out), held_out) for C in c_grid for held_out in splits]
    scores = TaskRunner.map_ordered(lambda task: train_on_subset(K, labels, task[0], task[1], task[2])[1], tasks)
    fold_accuracies = {float(C): list(scores[index * folds:(index + 1) * folds]) for index, C in enumerate(c_grid)}
    accuracies = {C: float(np.mean(values)) for C, values in fold_accuracies.items()}
    best = max(sorted(accuracies), key=lambda C: accuracies[C])
    logger.info("Cross-validation picked C=%g (mean accuracy %.4f)", best, accuracies[best])
    return CrossValidationResult(best_C=best, accuracies=accuracies, fold_accuracies=fold_accuracies)


def balanced_prefix(y, N: int) -> np.ndarray:
    """
    First N indices taken alternately from each class in order of appearance.
    """
    labels = np.asarray(y)
    if not 2 <= N <= labels.shape[0]:
        raise InputError(f"N must lie in 2..{labels.shape[0]}, got {N}.")
    positives = list(np.flatnonzero(labels > 0))
    negatives = list(np.flatnonzero(labels < 0))
    chosen = []
    while len(chosen) < N:
        for pool in (positives, negatives):
            if pool and len(chosen) < N:
                chosen.append(pool.pop(0))
    return np.sort(np.array(chosen, dtype=int))


def subsample_columns(total: int, p: int, seed: int) -> np.ndarray:
    """
    Nested selection: for a fixed seed the columns for p are a prefix of those for any larger p.
    """
    if not 1 <= p <= total:
        raise InputError(f"p must lie in 1..{total}, got {p}.")
    return np.random.default_rng(seed).permutation(total)[:p]


def feature_kernel(train: np.ndarray, test: np.ndarray, columns: np.ndarray) -> Tuple[GramMatrix, np.ndarray]:
    """
    Train Gram and test x train block of sum_{i in columns} (1/sqrt(p)) f_i(x) f_i(x').
    """
    weights = np.full(columns.shape[0], 1.0 / math.sqrt(columns.shape[0]))
    train_columns = train[:, columns]
    values = weighted_gram(train_columns, weights)
    cross = weighted_gram(test[:, columns], weights, train_columns)
    return GramMatrix((values + values.T) / 2), cross


@dataclass
class GapExperimentResult:
    rows: List[Dict[str, Union[int, float, str]]]
    bounds: Dict[int, float]

    def mean_rows(self) -> List[Dict[str, Union[int, float, str]]]:
        return [row for row in self.rows if row["seed"] == "mean"]

    def gap_trend(self) -> float:
        """
        Spearman rank correlation between p and the seed-averaged gap.
        """
        means = [row for row in self.mean_rows() if isinstance(row["p"], (int, np.integer))]
        if len(means) < 2:
            return float("nan")
        return float(stats.spearmanr([row["p"] for row in means], [row["gap"] for row in means])[0])


def _risk_row(p, N, seed, train_accuracy: float, test_accuracy: float) -> Dict[str, Union[int, float, str]]:
    train_risk, test_risk = 1 - train_accuracy, 1 - test_accuracy
    return {"p": p, "N": N, "seed": seed, "train_risk": train_risk, "test_risk": test_risk,
            "gap": test_risk - train_risk}


def _mean_row(p, N, rows) -> Dict[str, Union[int, float, str]]:
    train_risk = float(np.mean([row["train_risk"] for row in rows]))
    test_risk = float(np.mean([row["test_risk"] for row in rows]))
    return {"p": p, "N": N, "seed": "mean", "train_risk": train_risk, "test_risk": test_risk,
            "gap": test_risk - train_risk}


def generalization_gap_experiment(train_features: np.ndarray, test_features: np.ndarray, y_train, y_test,
                                  C: float, p_list: Sequence[int], seeds: Sequence[int],
                                  N: Optional[int] = None, margin: float = 1.0, delta: float = 0.05,
                                  gfqk_grams: Optional[Tuple[np.ndarray, np.ndarray]] = None
                                  ) -> GapExperimentResult:
    """
    Risk = 1 - accuracy for SVMs trained on p randomly chosen feature columns, per seed and averaged over seeds.
    :param train_features: (N_train, P) Pauli expectations of the training points.
    :param test_features: (N_test, P) Pauli expectations of the test points.
    :param C: box parameter.
    :param p_list: feature counts, each at most P.
    :param seeds: one random column selection per seed.
    :param N: training points used (a class-balanced prefix); all of them by default.
    :param gfqk_grams: optional (train Gram, test x train block) of the GFQK, reported as p = "gfqk".
    :return: rows per (p, seed) plus a mean row per p, and the bound's gap term per p.
    """
    train_features = np.atleast_2d(np.asarray(train_features, dtype=float))
    test_features = np.atleast_2d(np.asarray(test_features, dtype=float))
    y_train, y_test = np.asarray(y_train), np.asarray(y_test)
    if test_features.shape[0] == 0 or y_test.shape[0] == 0:
        raise InputError("The generalization-gap experiment needs at least one test point.")
    if test_features.shape[0] != y_test.shape[0] or train_features.shape[0] != y_train.shape[0]:
        raise InputError("Feature tables and labels disagree on the number of points.")
    if test_features.shape[1] != train_features.shape[1]:
        raise InputError("Train and test feature tables have different columns.")
    total = train_features.shape[1]
    too_large = [p for p in p_list if not 1 <= p <= total]
    if too_large:
        raise InputError(f"p values {too_large} exceed the {total} available features.")
    chosen = np.arange(y_train.shape[0]) if N is None else balanced_prefix(y_train, N)
    train, labels = train_features[chosen], y_train[chosen]
    size = chosen.shape[0]

    def run_cell(task):
        p, seed = task
        K, cross = feature_kernel(train, test_features, subsample_columns(total, p, seed))
        model = svm_train(K, labels, C)
        return _risk_row(p, size, seed, accuracy(model, K.values, labels), accuracy(model, cross, y_test))

    per_seed = TaskRunner.map_ordered(run_cell, [(p, seed) for p in p_list for seed in seeds])
    rows, bounds = [], {}
    for index, p in enumerate(p_list):
        cell = per_seed[index * len(seeds):(index + 1) * len(seeds)]
        rows.extend(cell)
        rows.append(_mean_row(p, size, cell))
        # base kernels f_i(x) f_i(x') have diagonals bounded by 1
        traces = np.sum(train ** 2, axis=0)[subsample_columns(total, p, seeds[0])]
        bounds[int(p)] = rademacher_bound(BoundInputs(p=p, N=size, margin=margin, R2=1.0, delta=delta,
                                                      traces=traces)).generalization_gap
    if gfqk_grams is not None:
        gram_train, gram_cross = (np.asarray(values, dtype=float) for values in gfqk_grams)
        K = GramMatrix(gram_train[np.ix_(chosen, chosen)], estimator=Estimator.EXACT)
        model = svm_train(K, labels, C)
        row = _risk_row("gfqk", size, "-", accuracy(model, K.values, labels),
                        accuracy(model, gram_cross[:, chosen], y_test))
        rows.append(row)
    logger.info("Generalization-gap experiment finished: %d rows for N=%d", len(rows), size)
    return GapExperimentResult(rows=rows, bounds=bounds)
