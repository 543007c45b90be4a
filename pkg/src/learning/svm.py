"""
Soft-margin SVM on precomputed Gram matrices, solved in the dual by sequential minimal optimization.
"""
import json
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.errors import DataError, DegenerateError, InputError
from src.kernels.gram_repository import Estimator, GramMatrix

logger = logging.getLogger(__name__)

KKT_TOLERANCE = 1e-6
SOLVER_TOLERANCE = 1e-9
SUPPORT_TOLERANCE = 1e-12
MAX_ITERATIONS = 200000


@dataclass(frozen=True, eq=False)
class SvmModel:
    alpha: np.ndarray
    b: float
    C: float
    y: np.ndarray
    gram_hash: str = ""
    clipped: bool = False
    iterations: int = 0

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > SUPPORT_TOLERANCE)

    @property
    def coefficients(self) -> np.ndarray:
        return self.alpha * self.y

    def to_json(self) -> str:
        return json.dumps({"alpha": [float(value) for value in self.alpha],
                           "b": float(self.b),
                           "C": float(self.C),
                           "y": [int(value) for value in self.y],
                           "support": [int(index) for index in self.support],
                           "gram_hash": self.gram_hash,
                           "clipped": self.clipped}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        data = json.loads(text)
        return cls(alpha=np.array(data["alpha"], dtype=float), b=float(data["b"]), C=float(data["C"]),
                   y=np.array(data["y"], dtype=float), gram_hash=data.get("gram_hash", ""),
                   clipped=bool(data.get("clipped", False)))


def validate_labels(y) -> np.ndarray:
    labels = np.asarray(y, dtype=float).reshape(-1)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise InputError("Labels must be -1 or +1.")
    if np.unique(labels).size < 2:
        raise DegenerateError("Training labels contain a single class.")
    return labels


def prepare_gram(K, clip: bool = True) -> GramMatrix:
    """
    Exact Grams must be PSD; sampled Grams are clipped to the PSD cone when `clip` is set.
    """
    K = K if isinstance(K, GramMatrix) else GramMatrix(np.asarray(K, dtype=float))
    if not np.all(np.isfinite(K.values)):
        raise InputError("The Gram matrix contains non-finite entries.")
    if K.is_psd():
        return K
    if K.estimator == Estimator.EXACT:
        raise DataError(f"Exact Gram matrix is not PSD (smallest eigenvalue {K.eigenvalues()[0]:.3g}).")
    if clip:
        logger.debug("Clipping %s Gram matrix to the PSD cone", K.estimator.value)
        return K.clip_to_psd()
    return K


def dual_objective(alpha, K, y) -> float:
    """
    sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
    """
    values = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    coefficients = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * coefficients @ values @ coefficients)


def _working_set(alpha: np.ndarray, y: np.ndarray, gradient: np.ndarray, C: float) -> Tuple[int, int, float]:
    """
    Maximal violating pair over I_up = {y alpha < upper} and I_low = {y alpha > lower}, where the box for
    y alpha is [0, C] for positive and [-C, 0] for negative labels.
    """
    scaled = y * alpha
    upper = np.where(y > 0, C, 0.0)
    lower = np.where(y > 0, 0.0, -C)
    criterion = y * gradient
    up = np.flatnonzero(scaled < upper - SUPPORT_TOLERANCE * C)
    low = np.flatnonzero(scaled > lower + SUPPORT_TOLERANCE * C)
    if up.size == 0 or low.size == 0:
        return -1, -1, 0.0
    i = up[np.argmax(criterion[up])]
    j = low[np.argmin(criterion[low])]
    return int(i), int(j), float(criterion[i] - criterion[j])


def _bias(alpha: np.ndarray, y: np.ndarray, gradient: np.ndarray, C: float) -> float:
    criterion = y * gradient
    free = np.flatnonzero((alpha > SUPPORT_TOLERANCE * C) & (alpha < C * (1 - SUPPORT_TOLERANCE)))
    if free.size:
        return float(np.mean(criterion[free]))
    scaled = y * alpha
    up = scaled < np.where(y > 0, C, 0.0) - SUPPORT_TOLERANCE * C
    low = scaled > np.where(y > 0, 0.0, -C) + SUPPORT_TOLERANCE * C
    highest = np.max(criterion[up]) if np.any(up) else np.min(criterion[low])
    lowest = np.min(criterion[low]) if np.any(low) else highest
    return float((highest + lowest) / 2)


def svm_train(K, y, C: float, clip: bool = True, max_iterations: int = MAX_ITERATIONS) -> SvmModel:
    """
    Solves max_alpha sum(alpha) - 1/2 sum alpha_i alpha_j y_i y_j K_ij subject to 0 <= alpha_i <= C and
    sum alpha_i y_i = 0.
    :param K: N x N Gram matrix (GramMatrix or array).
    :param y: labels in {-1, +1}.
    :param C: box parameter.
    :param clip: clip sampled Grams to the PSD cone before training.
    :return: model whose decision function is f(x_j) = sum_i alpha_i y_i K_ij + b.
    """
    if not C > 0:
        raise InputError(f"The box parameter C must be positive, got {C}.")
    gram_matrix = prepare_gram(K, clip)
    labels = validate_labels(y)
    values = gram_matrix.values
    if values.shape[0] != labels.shape[0]:
        raise InputError(f"Gram matrix has {values.shape[0]} rows for {labels.shape[0]} labels.")

    alpha = np.zeros(labels.shape[0])
    # gradient of the dual objective: 1 - y_k sum_l alpha_l y_l K_lk
    gradient = np.ones(labels.shape[0])
    iterations = 0
    while iterations < max_iterations:
        i, j, violation = _working_set(alpha, labels, gradient, C)
        if i < 0 or violation <= SOLVER_TOLERANCE:
            break
        curvature = values[i, i] + values[j, j] - 2 * values[i, j]
        step = violation / curvature if curvature > SUPPORT_TOLERANCE else np.inf
        step = min(step,
                   (C if labels[i] > 0 else 0.0) - labels[i] * alpha[i],
                   labels[j] * alpha[j] - (0.0 if labels[j] > 0 else -C))
        alpha[i] += labels[i] * step
        alpha[j] -= labels[j] * step
        gradient += step * labels * (values[j] - values[i])
        iterations += 1
    else:
        logger.warning("SMO stopped after %d iterations without reaching tolerance %g", max_iterations,
                       SOLVER_TOLERANCE)

    alpha = np.clip(alpha, 0.0, C)
    b = _bias(alpha, labels, gradient, C)
    logger.debug("SMO finished after %d iterations with %d support vectors", iterations,
                 int(np.sum(alpha > SUPPORT_TOLERANCE)))
    return SvmModel(alpha=alpha, b=b, C=float(C), y=labels, gram_hash=gram_matrix.kernel_hash,
                    clipped=gram_matrix.clipped, iterations=iterations)


def decision_function(model: SvmModel, K_cross) -> np.ndarray:
    K_cross = np.atleast_2d(np.asarray(K_cross, dtype=float))
    if K_cross.shape[1] != model.alpha.shape[0]:
        raise InputError(f"Kernel block has {K_cross.shape[1]} columns for {model.alpha.shape[0]} training points.")
    return K_cross @ model.coefficients + model.b


def predict(model: SvmModel, K_cross) -> Tuple[np.ndarray, np.ndarray]:
    """
    :param model: trained model.
    :param K_cross: test x train kernel block.
    :return: labels (sign of the score, 0 mapped to +1) and scores.
    """
    scores = decision_function(model, K_cross)
    return np.where(scores >= 0, 1, -1), scores


def accuracy(model: SvmModel, K_cross, y) -> float:
    labels, _ = predict(model, K_cross)
    return float(np.mean(labels == np.asarray(y)))


def kkt_violation(model: SvmModel, K) -> float:
    """
    Largest violation of the soft-margin KKT conditions on the training set.
    """
    values = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    margins = model.y * decision_function(model, values)
    scale = max(model.C, 1.0)
    at_zero = model.alpha <= SUPPORT_TOLERANCE * scale
    at_box = model.alpha >= model.C - SUPPORT_TOLERANCE * scale
    free = ~(at_zero | at_box)
    violations = np.concatenate([np.maximum(0.0, 1 - margins[at_zero]),
                                 np.maximum(0.0, margins[at_box] - 1),
                                 np.abs(margins[free] - 1)])
    return float(np.max(violations, initial=0.0))


def train_on_subset(K: GramMatrix, y, C: float, train: np.ndarray, evaluate: Optional[np.ndarray] = None):
    """
    Trains on the rows `train` of K and scores the rows `evaluate` (the training rows by default).
    """
    evaluate = train if evaluate is None else evaluate
    sub_gram = GramMatrix(K.submatrix(train), kernel_hash=K.kernel_hash, estimator=K.estimator, seed=K.seed)
    labels = np.asarray(y)
    model = svm_train(sub_gram, labels[train], C)
    return model, accuracy(model, K.submatrix(evaluate, train), labels[evaluate])
