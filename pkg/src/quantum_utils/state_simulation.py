"""
Exact pure-state simulation of the IQP data embedding.

Bit order: qubit 0 is the most significant bit of the amplitude index, so the amplitude vector reshaped to
(2,) * n has axis j for qubit j.
"""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.errors import CapacityError, InputError
from src.quantum_utils.pauli_algebra import PauliString

logger = logging.getLogger(__name__)

MAX_STATE_QUBITS = 24

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_DAGGER = np.array([[1, 0], [0, -1j]], dtype=complex)


class Coupling(str, Enum):
    ALL_PAIRS = "all-pairs"
    RING = "ring"


@dataclass(frozen=True)
class EmbeddingConfig:
    """
    IQP embedding U(lambda x) = [D(lambda x) H^n]^layers with
    D(y) = exp(i [sum_j y_j Z_j + sum_(j,k) y_j y_k Z_j Z_k]).
    """
    n: int
    bandwidth: float = 1.0
    layers: int = 2
    coupling: Coupling = Coupling.ALL_PAIRS

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"The qubit count must be a positive integer, got {self.n}.")
        if self.n > MAX_STATE_QUBITS:
            raise CapacityError(f"Statevectors are limited to {MAX_STATE_QUBITS} qubits, got {self.n}.")
        if not 0.0 <= float(self.bandwidth) <= 1.0:
            raise InputError(f"The bandwidth must lie in [0, 1], got {self.bandwidth}.")
        if int(self.layers) != self.layers or self.layers < 1:
            raise InputError(f"The layer count must be a positive integer, got {self.layers}.")
        object.__setattr__(self, "coupling", Coupling(self.coupling))

    def pairs(self) -> List[Tuple[int, int]]:
        if self.coupling == Coupling.ALL_PAIRS:
            return list(itertools.combinations(range(self.n), 2))
        if self.n < 2:
            return []
        if self.n == 2:
            return [(0, 1)]
        return [(j, (j + 1) % self.n) for j in range(self.n)]

    def with_bandwidth(self, bandwidth: float) -> "EmbeddingConfig":
        return EmbeddingConfig(n=self.n, bandwidth=bandwidth, layers=self.layers, coupling=self.coupling)

    def to_dict(self) -> Dict[str, object]:
        return {"n": self.n, "bandwidth": self.bandwidth, "layers": self.layers, "coupling": self.coupling.value}

    @classmethod
    def from_dict(cls, data) -> "EmbeddingConfig":
        return cls(n=int(data["n"]),
                   bandwidth=float(data.get("bandwidth", 1.0)),
                   layers=int(data.get("layers", 2)),
                   coupling=Coupling(data.get("coupling", Coupling.ALL_PAIRS.value)))


@dataclass(frozen=True, eq=False)
class StateVector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape[0] != 2 ** self.n:
            raise InputError(f"A {self.n}-qubit state needs {2 ** self.n} amplitudes, got {amplitudes.shape[0]}.")
        norm = float(np.vdot(amplitudes, amplitudes).real)
        if abs(norm - 1.0) > 1e-12:
            raise InputError(f"State is not normalized: squared norm {norm:.15g}.")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def basis_state(cls, n: int, index: int = 0) -> "StateVector":
        amplitudes = np.zeros(2 ** n, dtype=complex)
        amplitudes[index] = 1.0
        return cls(n, amplitudes)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    dim: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.shape != (self.dim, self.dim):
            raise InputError(f"Density matrix must be {self.dim}x{self.dim}, got {entries.shape}.")
        if np.max(np.abs(entries - entries.conj().T)) > 1e-12:
            raise InputError("Density matrix is not Hermitian.")
        if abs(np.trace(entries).real - 1.0) > 1e-12:
            raise InputError("Density matrix does not have unit trace.")
        if self.dim <= 1024 and np.linalg.eigvalsh(entries).min() < -1e-10:
            raise InputError("Density matrix has negative eigenvalues.")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def purity(self) -> float:
        return float(np.real(np.sum(self.entries * self.entries.T)))


def apply_single_qubit(amplitudes: np.ndarray, n: int, gate: np.ndarray, qubit: int) -> np.ndarray:
    psi = amplitudes.reshape((2,) * n)
    psi = np.moveaxis(np.tensordot(gate, psi, axes=([1], [qubit])), 0, qubit)
    return psi.reshape(-1)


def apply_hadamard_layer(amplitudes: np.ndarray, n: int) -> np.ndarray:
    for qubit in range(n):
        amplitudes = apply_single_qubit(amplitudes, n, HADAMARD, qubit)
    return amplitudes


def z_eigenvalues(n: int, qubit: int) -> np.ndarray:
    """
    +1/-1 eigenvalue of Z_qubit on every computational basis state.
    """
    bits = (np.arange(2 ** n) >> (n - 1 - qubit)) & 1
    return (1 - 2 * bits).astype(np.int8)


def parity(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.int64)
    result = np.zeros_like(values)
    while np.any(values):
        result ^= values & 1
        values = values >> 1
    return result


def diagonal_phases(y: np.ndarray, cfg: EmbeddingConfig) -> np.ndarray:
    n = cfg.n
    z = [z_eigenvalues(n, j) for j in range(n)]
    angles = np.zeros(2 ** n)
    for j in range(n):
        if y[j] != 0.0:
            angles += y[j] * z[j]
    for j, k in cfg.pairs():
        coefficient = y[j] * y[k]
        if coefficient != 0.0:
            angles += coefficient * (z[j] * z[k])
    return np.exp(1j * angles)


def embed(x: Sequence[float], cfg: EmbeddingConfig) -> StateVector:
    """
    Prepares (D(lambda x) H^n)^layers |0...0>.
    :param x: real vector of length cfg.n.
    :param cfg: embedding configuration.
    :return:
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != cfg.n:
        raise InputError(f"Input has dimension {x.shape[0]} but the embedding expects {cfg.n}.")
    if not np.all(np.isfinite(x)):
        raise InputError("Input contains non-finite entries.")
    phases = diagonal_phases(cfg.bandwidth * x, cfg)
    amplitudes = np.zeros(2 ** cfg.n, dtype=complex)
    amplitudes[0] = 1.0
    for _ in range(cfg.layers):
        amplitudes = phases * apply_hadamard_layer(amplitudes, cfg.n)
    amplitudes = amplitudes / np.linalg.norm(amplitudes)
    return StateVector(cfg.n, amplitudes)


def embed_dataset(dataset, cfg: EmbeddingConfig) -> List[StateVector]:
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    if dataset.shape[0] == 0:
        raise InputError("The dataset is empty.")
    logger.debug("Embedding %d points on %d qubits at bandwidth %s", dataset.shape[0], cfg.n, cfg.bandwidth)
    return [embed(row, cfg) for row in dataset]


def state_matrix(states: Sequence[StateVector]) -> np.ndarray:
    if len(states) == 0:
        raise InputError("No states given.")
    n = states[0].n
    if any(state.n != n for state in states):
        raise InputError("States have inconsistent qubit counts.")
    return np.stack([state.amplitudes for state in states])


def pauli_expectation(state: StateVector, P: PauliString) -> float:
    """
    tr(rho P) for rho = |psi><psi|.
    """
    if P.n != state.n:
        raise InputError(f"Pauli string acts on {P.n} qubits but the state has {state.n}.")
    return float(expectation_table(state.amplitudes[None, :], state.n, [P])[0, 0])


def expectation_table(amplitudes: np.ndarray, n: int, paulis: Sequence[PauliString]) -> np.ndarray:
    """
    Expectation values of every Pauli on every state.
    :param amplitudes: (N, 2^n) stacked statevectors.
    :param n: qubit count.
    :param paulis: p strings on n qubits.
    :return: (N, p) real table.
    """
    amplitudes = np.atleast_2d(amplitudes)
    indices = np.arange(2 ** n)
    table = np.empty((amplitudes.shape[0], len(paulis)))
    sign_cache = {}
    for column, pauli in enumerate(paulis):
        if pauli.n != n:
            raise InputError(f"Pauli string {pauli} does not act on {n} qubits.")
        if pauli.weight == 0:
            table[:, column] = 1.0
            continue
        x_mask, z_mask, y_count = pauli.masks()
        if z_mask not in sign_cache:
            sign_cache[z_mask] = 1 - 2 * parity(indices & z_mask)
        signs = sign_cache[z_mask]
        values = (1j ** y_count) * np.sum(amplitudes[:, indices ^ x_mask].conj() * signs * amplitudes, axis=1)
        table[:, column] = values.real
    return np.clip(table, -1.0, 1.0)


def reduced_density_matrix(state: StateVector, s: Sequence[int]) -> DensityMatrix:
    """
    rho_s = tr_{complement of s}(|psi><psi|); the kept qubits are ordered ascending.
    """
    qubits = sorted(set(int(q) for q in s))
    if len(qubits) == 0:
        raise InputError("The subsystem must contain at least one qubit.")
    if qubits[0] < 0 or qubits[-1] >= state.n:
        raise InputError(f"Subsystem {qubits} is outside 0..{state.n - 1}.")
    traced = [q for q in range(state.n) if q not in qubits]
    psi = np.transpose(state.tensor(), qubits + traced).reshape(2 ** len(qubits), -1)
    rho = psi @ psi.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(2 ** len(qubits), rho / np.trace(rho).real)


def overlap(a: StateVector, b: StateVector) -> float:
    if a.n != b.n:
        raise InputError(f"States have different qubit counts: {a.n} and {b.n}.")
    return float(np.clip(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2, 0.0, 1.0))
