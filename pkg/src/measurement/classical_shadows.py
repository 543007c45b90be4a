"""
Random-Pauli classical shadows of simulated states.

Each snapshot measures every qubit in a uniformly drawn X, Y or Z basis; outcome bit 0 is the +1 eigenvalue.
"""
import json
import logging
import math
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.errors import InputError
from src.kernels.gram_repository import Estimator, GramMatrix, dataset_hash, spec_hash
from src.kernels.trace_kernels import weighted_gram
from src.quantum_utils.pauli_algebra import MEASUREMENT_SYMBOLS, KernelSpec, PauliString
from src.quantum_utils.state_simulation import (HADAMARD, S_DAGGER, EmbeddingConfig, StateVector,
                                                apply_single_qubit, embed_dataset)
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)

# rotations taking the X, Y and Z eigenbases to the computational basis
BASIS_ROTATIONS = np.stack([HADAMARD, HADAMARD @ S_DAGGER, np.eye(2, dtype=complex)])

# largest 3^n x 2^n table of rotated probabilities kept in memory at once
MAX_PROBABILITY_TABLE = 2 ** 24

SMALL_SHADOW_SIZE = 100
DEFAULT_GROUPS = 10


@dataclass(frozen=True, eq=False)
class ShadowSet:
    """
    T snapshots of one state: bases[t, j] in {0, 1, 2} = {X, Y, Z}, outcomes[t, j] in {0, 1}.
    """
    n: int
    bases: np.ndarray
    outcomes: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        bases = np.asarray(self.bases, dtype=np.uint8).reshape(-1, self.n)
        outcomes = np.asarray(self.outcomes, dtype=np.uint8).reshape(-1, self.n)
        if bases.shape != outcomes.shape:
            raise InputError("Bases and outcomes must have the same shape.")
        if np.any(bases > 2) or np.any(outcomes > 1):
            raise InputError("Bases must lie in {0, 1, 2} and outcomes in {0, 1}.")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def T(self) -> int:
        return self.bases.shape[0]

    def basis_string(self, t: int) -> str:
        return "".join(MEASUREMENT_SYMBOLS[code] for code in self.bases[t])


def default_groups(T: int) -> int:
    return 1 if T < SMALL_SHADOW_SIZE else DEFAULT_GROUPS


def _rotated_probabilities(state: StateVector, codes: np.ndarray) -> np.ndarray:
    """
    Born distribution after rotating into each requested basis; one row per basis code.
    """
    n = state.n
    if 3 ** n * 2 ** n <= MAX_PROBABILITY_TABLE:
        psi = state.tensor()
        for qubit in range(n):
            # layout: basis axes of the rotated qubits, then all n qubit axes
            psi = np.tensordot(BASIS_ROTATIONS, psi, axes=([2], [2 * qubit]))
            psi = np.moveaxis(psi, [0, 1], [qubit, 2 * qubit + 1])
        table = (np.abs(psi.reshape(3 ** n, 2 ** n)) ** 2)
        return table[codes]
    rows = np.empty((len(codes), 2 ** n))
    for row, code in enumerate(codes):
        amplitudes = state.amplitudes
        for qubit in range(n):
            basis = (code // 3 ** (n - 1 - qubit)) % 3
            amplitudes = apply_single_qubit(amplitudes, n, BASIS_ROTATIONS[basis], qubit)
        rows[row] = np.abs(amplitudes) ** 2
    return rows


def collect_shadows(state: StateVector, T: int, seed) -> ShadowSet:
    """
    Draws T random-Pauli snapshots, sampling each outcome from the exact Born distribution.
    :param state: measured state.
    :param T: snapshot count.
    :param seed: integer or sequence seeding numpy's default_rng.
    :return:
    """
    if int(T) != T or T < 1:
        raise InputError(f"The snapshot count must be a positive integer, got {T}.")
    n = state.n
    rng = np.random.default_rng(seed)
    bases = rng.integers(0, 3, size=(T, n))
    uniforms = rng.random(T)
    codes = bases @ (3 ** np.arange(n - 1, -1, -1))
    unique_codes, inverse = np.unique(codes, return_inverse=True)
    probabilities = _rotated_probabilities(state, unique_codes)
    cumulative = np.cumsum(probabilities, axis=1)
    cumulative /= cumulative[:, -1:]
    outcome_index = np.minimum(np.sum(cumulative[inverse] < uniforms[:, None], axis=1), 2 ** n - 1)
    outcomes = (outcome_index[:, None] >> np.arange(n - 1, -1, -1)) & 1
    logger.debug("Collected %d snapshots of a %d-qubit state", T, n)
    return ShadowSet(n=n, bases=bases, outcomes=outcomes, seed=seed if isinstance(seed, int) else None)


def snapshot_values(shadows: ShadowSet, P: PauliString) -> np.ndarray:
    """
    Per-snapshot estimator: prod over the support of 3 * (+-1) when every measured basis matches P, else 0.
    """
    if P.n != shadows.n:
        raise InputError(f"Pauli string acts on {P.n} qubits but the shadows have {shadows.n}.")
    support = list(P.support)
    if not support:
        return np.ones(shadows.T)
    wanted = np.array([MEASUREMENT_SYMBOLS.index(letter) for letter in P.letters], dtype=np.uint8)
    matches = np.all(shadows.bases[:, support] == wanted, axis=1)
    signs = np.prod(1 - 2 * shadows.outcomes[:, support].astype(np.int64), axis=1)
    return np.where(matches, 3.0 ** len(support) * signs, 0.0)


def median_of_means(values: np.ndarray, groups: int) -> float:
    return float(np.median([chunk.mean() for chunk in np.array_split(values, groups)]))


def estimate_pauli(shadows: ShadowSet, P: PauliString, groups: Optional[int] = None) -> float:
    """
    Median of `groups` means of the per-snapshot values.
    :param shadows: nonempty shadow set.
    :param P: observable.
    :param groups: 1 <= groups <= T; defaults to 1 below 100 snapshots and 10 otherwise.
    :return: estimate of tr(rho P), within [-3^H, 3^H].
    """
    if shadows.T == 0:
        raise InputError("Cannot estimate from an empty shadow set.")
    groups = default_groups(shadows.T) if groups is None else groups
    if not 1 <= groups <= shadows.T:
        raise InputError(f"The group count must lie in 1..{shadows.T}, got {groups}.")
    if P.weight == 0:
        return 1.0
    return median_of_means(snapshot_values(shadows, P), groups)


def estimate_feature_table(shadow_sets: Sequence[ShadowSet], paulis: Sequence[PauliString],
                           groups: Optional[int] = None) -> np.ndarray:
    return np.array([[estimate_pauli(shadows, pauli, groups) for pauli in paulis] for shadows in shadow_sets])


def collect_dataset_shadows(dataset, cfg: EmbeddingConfig, T: int, seed: int, offset: int = 0):
    """
    One shadow set per datum, datum i drawing from the stream (seed, offset + i).
    :param offset: first stream index; test points continue after the N training streams.
    """
    states = embed_dataset(dataset, cfg)
    return TaskRunner.map_ordered(lambda item: collect_shadows(item[1], T, [seed, offset + item[0]]),
                                  list(enumerate(states)))


def shadow_gram(dataset, spec: KernelSpec, T: int, seed: int, cfg: EmbeddingConfig,
                max_weight: int = 3, groups: Optional[int] = None) -> GramMatrix:
    """
    Gram of a bounded-weight Pauli GTQK from shadow-estimated features: N shadow collections in total.
    :param max_weight: largest Pauli weight the shadow budget is configured for.
    :return:
    """
    if spec.n != cfg.n:
        raise InputError(f"Kernel spec acts on {spec.n} qubits but the embedding has {cfg.n}.")
    if spec.max_weight > max_weight:
        raise InputError(f"Kernel spec contains a Pauli of weight {spec.max_weight} above the configured maximum "
                         f"{max_weight}.")
    shadow_sets = collect_dataset_shadows(dataset, cfg, T, seed)
    features = estimate_feature_table(shadow_sets, spec.paulis(), groups)
    values = weighted_gram(features, spec.weight_vector())
    return GramMatrix((values + values.T) / 2, kernel_hash=spec_hash(spec.to_dict()),
                      dataset_hash=dataset_hash(dataset), estimator=Estimator.SHADOWS, seed=seed)


class ShadowRepository:
    """
    Binary layout (little-endian): u32 n, u32 T, then per snapshot n basis bytes and ceil(n/8) outcome bytes, bit j
    of the outcome stored at bit j % 8 of byte j // 8.
    """

    @classmethod
    def to_bytes(cls, shadows: ShadowSet) -> bytes:
        packed = np.packbits(shadows.outcomes, axis=1, bitorder="little")
        records = np.concatenate([shadows.bases, packed], axis=1).astype(np.uint8)
        return struct.pack("<II", shadows.n, shadows.T) + records.tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> ShadowSet:
        if len(payload) < 8:
            raise InputError("Shadow record is shorter than its 8-byte header.")
        n, T = struct.unpack("<II", payload[:8])
        width = n + math.ceil(n / 8)
        if len(payload) != 8 + T * width:
            raise InputError(f"Shadow record has {len(payload) - 8} payload bytes, expected {T * width}.")
        records = np.frombuffer(payload[8:], dtype=np.uint8).reshape(T, width)
        outcomes = np.unpackbits(records[:, n:], axis=1, bitorder="little")[:, :n]
        return ShadowSet(n=n, bases=records[:, :n], outcomes=outcomes)

    @classmethod
    def to_json(cls, shadows: ShadowSet) -> str:
        snapshots = [{"basis": shadows.basis_string(t),
                      "outcome": "".join(str(bit) for bit in shadows.outcomes[t])} for t in range(shadows.T)]
        return json.dumps({"n": shadows.n, "T": shadows.T, "seed": shadows.seed, "snapshots": snapshots})

    @classmethod
    def from_json(cls, text: str) -> ShadowSet:
        data = json.loads(text)
        n = int(data["n"])
        bases = [[MEASUREMENT_SYMBOLS.index(letter) for letter in item["basis"]] for item in data["snapshots"]]
        outcomes = [[int(bit) for bit in item["outcome"]] for item in data["snapshots"]]
        return ShadowSet(n=n, bases=np.array(bases, dtype=np.uint8).reshape(-1, n),
                         outcomes=np.array(outcomes, dtype=np.uint8).reshape(-1, n), seed=data.get("seed"))
