"""
Margin losses and Rademacher generalization bounds for kernels built from p nonnegatively weighted base kernels.
"""
import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from src.errors import InputError
from src.kernels.gram_repository import GramMatrix

ETA_0 = 23 / 22


@dataclass(frozen=True)
class BoundInputs:
    """
    :param p: number of nonzero weights (base kernels).
    :param N: training-set size.
    :param margin: margin parameter of the loss.
    :param R2: bound on every kernel diagonal k(x, x).
    :param delta: failure probability.
    :param traces: (Tr K_1, ..., Tr K_p) of the base-kernel Grams.
    """
    p: int
    N: int
    margin: float
    R2: float
    delta: float
    traces: Sequence[float]
    eta0: float = ETA_0

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(float(value) for value in self.traces))
        if self.p < 1:
            raise InputError(f"p must be at least 1, got {self.p}.")
        if self.N < 1:
            raise InputError(f"N must be at least 1, got {self.N}.")
        if not self.margin > 0:
            raise InputError(f"The margin must be positive, got {self.margin}.")
        if self.R2 < 0:
            raise InputError(f"R^2 must be nonnegative, got {self.R2}.")
        if not 0 < self.delta < 1:
            raise InputError(f"delta must lie in (0, 1), got {self.delta}.")
        if len(self.traces) != self.p:
            raise InputError(f"Expected {self.p} kernel traces, got {len(self.traces)}.")
        if any(value < 0 for value in self.traces):
            raise InputError("Kernel traces must be nonnegative.")


@dataclass(frozen=True)
class BoundRecord:
    empirical: float
    complexity: float
    confidence: float

    @property
    def generalization_gap(self) -> float:
        return self.complexity + self.confidence


def rademacher_bound(bi: BoundInputs) -> BoundRecord:
    """
    empirical = sqrt(2 eta0 ||u||_2) / N;
    gap = (2 p^(1/4) / margin) sqrt(2 eta0 R^2 / N) + 3 sqrt(ln(2/delta) / (2N)).
    """
    empirical = math.sqrt(2 * bi.eta0 * float(np.linalg.norm(bi.traces))) / bi.N
    complexity = 2 * bi.p ** 0.25 / bi.margin * math.sqrt(2 * bi.eta0 * bi.R2 / bi.N)
    confidence = 3 * math.sqrt(math.log(2 / bi.delta) / (2 * bi.N))
    return BoundRecord(empirical=empirical, complexity=complexity, confidence=confidence)


def kernel_rademacher_bound(K, Lambda: float = 1.0) -> float:
    """
    Lambda sqrt(Tr K) / N for a single kernel with RKHS norm bound Lambda.
    """
    values = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    trace = float(np.trace(values))
    if trace < 0:
        raise InputError("A kernel Gram matrix cannot have a negative trace.")
    return Lambda * math.sqrt(trace) / values.shape[0]


def _margins(scores, y) -> np.ndarray:
    scores = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if scores.shape != y.shape:
        raise InputError(f"Got {scores.shape[0]} scores for {y.shape[0]} labels.")
    return scores * y


def margin_loss(scores, y, margin: float) -> float:
    """
    Mean of 1 if z <= 0, 1 - z/margin if 0 <= z <= margin, 0 otherwise, with z = y * score.
    """
    if not margin > 0:
        raise InputError(f"The margin must be positive, got {margin}.")
    return float(np.mean(np.clip(1 - _margins(scores, y) / margin, 0.0, 1.0)))


def hinge_loss(scores, y, margin: float = 1.0) -> float:
    if not margin > 0:
        raise InputError(f"The margin must be positive, got {margin}.")
    return float(np.mean(np.maximum(0.0, 1 - _margins(scores, y) / margin)))


def margin_bound(scores, y, bi: BoundInputs) -> Dict[str, float]:
    """
    With probability at least 1 - delta the expected 0-1 risk is below the empirical margin loss plus the gap term.
    """
    record = rademacher_bound(bi)
    loss = margin_loss(scores, y, bi.margin)
    return {"margin_loss": loss,
            "empirical_complexity": record.empirical,
            "generalization_gap": record.generalization_gap,
            "risk_bound": loss + record.generalization_gap}
