"""
Finite-shot GFQK estimation with the simulated inversion test, and the measurement-budget model comparing it to
H-body LPQKs estimated from classical shadows.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import InputError
from src.kernels.gram_repository import Estimator, GramMatrix, dataset_hash, spec_hash
from src.kernels.trace_kernels import FidelityKernel
from src.quantum_utils.pauli_algebra import pauli_count
from src.quantum_utils.state_simulation import EmbeddingConfig
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)


def noisy_gfqk_gram(dataset, m: int, seed: int, cfg: EmbeddingConfig) -> GramMatrix:
    """
    Every entry (diagonal included) is Binomial(m, k_exact) / m, where k_exact is the probability of the all-zeros
    outcome of the inversion test. Entry (i, j), i <= j, draws from the stream (seed, i * N + j).
    :param dataset: sequence of input vectors.
    :param m: shots per matrix element.
    :param seed: master seed.
    :param cfg: embedding configuration.
    :return: symmetric shot-noisy Gram matrix.
    """
    if int(m) != m or m < 1:
        raise InputError(f"The shot count must be a positive integer, got {m}.")
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    kernel = FidelityKernel(cfg)
    exact = kernel.matrix(data)
    size = exact.shape[0]

    def sample_row(i: int) -> np.ndarray:
        row = np.zeros(size)
        for j in range(i, size):
            rng = np.random.default_rng([seed, i * size + j])
            row[j] = rng.binomial(int(m), exact[i, j]) / m
        return row

    upper = np.triu(np.array(TaskRunner.map_ordered(sample_row, range(size))))
    values = upper + np.triu(upper, 1).T
    logger.debug("Sampled %dx%d inversion-test Gram with %d shots per entry", size, size, m)
    return GramMatrix(values, kernel_hash=spec_hash(kernel.description()), dataset_hash=dataset_hash(data),
                      estimator=Estimator.SHOT_NOISY, seed=seed)


def noisy_gfqk_cross(dataset, reference, m: int, seed: int, cfg: EmbeddingConfig) -> np.ndarray:
    """
    Shot-noisy overlaps between new points (rows) and reference points (columns), as used to predict with a model
    trained on a noisy Gram. Entry (i, j) draws from the stream (seed, 1, i * M + j), apart from the Gram streams.
    """
    if int(m) != m or m < 1:
        raise InputError(f"The shot count must be a positive integer, got {m}.")
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    exact = FidelityKernel(cfg).matrix(data, np.atleast_2d(np.asarray(reference, dtype=float)))
    columns = exact.shape[1]

    def sample_row(i: int) -> np.ndarray:
        return np.array([np.random.default_rng([seed, 1, i * columns + j]).binomial(int(m), exact[i, j]) / m
                         for j in range(columns)])

    return np.array(TaskRunner.map_ordered(sample_row, range(exact.shape[0]))).reshape(exact.shape)


class ConstantMode(str, Enum):
    ASYMPTOTIC = "asymptotic"
    CALIBRATED = "calibrated"


@dataclass(frozen=True)
class BudgetQuery:
    """
    :param gfqk_constant: multiplier of the GFQK count in calibrated mode.
    :param lpqk_constant: multiplier of the LPQK count in calibrated mode.
    :param log_base: base of the logarithm of d_H; natural log by default.
    """
    n: int
    N: int
    H: int
    epsilon: float
    m: Optional[int] = None
    mode: ConstantMode = ConstantMode.ASYMPTOTIC
    gfqk_constant: float = 1.0
    lpqk_constant: float = 1.0
    log_base: float = math.e

    def __post_init__(self):
        object.__setattr__(self, "mode", ConstantMode(self.mode))
        if not self.epsilon > 0:
            raise InputError(f"The target error must be positive, got {self.epsilon}.")
        if self.N < 1:
            raise InputError(f"The training-set size must be at least 1, got {self.N}.")
        if not 1 <= self.H <= self.n:
            raise InputError(f"H must lie in 1..{self.n}, got {self.H}.")
        if self.m is not None and self.m < 1:
            raise InputError(f"The shot count must be positive, got {self.m}.")
        if self.log_base <= 1:
            raise InputError(f"The logarithm base must exceed 1, got {self.log_base}.")


@dataclass(frozen=True)
class BudgetRecord:
    M_gfqk: int
    M_lpqk: int
    crossover_N: int
    details: Dict[str, float] = field(default_factory=dict)


def _shots_per_pair(q: BudgetQuery) -> int:
    shots = q.m if q.m is not None else math.ceil(1 / q.epsilon ** 2)
    if q.mode == ConstantMode.CALIBRATED:
        shots = math.ceil(q.gfqk_constant * shots)
    return shots


def _shots_per_point(q: BudgetQuery) -> int:
    d_H = pauli_count(q.n, q.H)
    cost = math.log(d_H, q.log_base) * 3 ** q.H / q.epsilon ** 2
    if q.mode == ConstantMode.CALIBRATED:
        cost *= q.lpqk_constant
    return math.ceil(cost)


def shot_budget(q: BudgetQuery) -> BudgetRecord:
    """
    M_gfqk = N(N+1)/2 pair estimates of ceil(1/eps^2) shots; M_lpqk = N shadow collections of
    ceil(log(d_H) 3^H / eps^2) snapshots; crossover_N is the smallest N with M_lpqk < M_gfqk.
    """
    per_pair = _shots_per_pair(q)
    per_point = _shots_per_point(q)
    # N * L < N(N+1)/2 * G  <=>  N > 2L/G - 1
    crossover = max(1, (2 * per_point) // per_pair)
    return BudgetRecord(M_gfqk=q.N * (q.N + 1) // 2 * per_pair,
                        M_lpqk=q.N * per_point,
                        crossover_N=int(crossover),
                        details={"shots_per_pair": per_pair, "shots_per_point": per_point,
                                 "d_H": pauli_count(q.n, q.H)})


def budget_table(n: int, sizes: Sequence[int], bodies: Sequence[int], epsilon: float,
                 **options) -> List[Dict[str, int]]:
    """
    Rows of N, M_gfqk and one M_lpqk_H<h> column per body count, the series plotted against N.
    """
    rows = []
    for N in sizes:
        row = {"N": int(N)}
        for H in bodies:
            record = shot_budget(BudgetQuery(n=n, N=int(N), H=H, epsilon=epsilon, **options))
            row["M_gfqk"] = record.M_gfqk
            row[f"M_lpqk_H{H}"] = record.M_lpqk
        rows.append(row)
    return rows
