"""
Empirical Mercer analysis of trace-induced kernels.

The data-covariance operator O_mu = mean over the dataset of rho(x) (x) rho(x) is represented in the normalized Pauli
basis, G_ij = (1/N) sum_x tr(rho(x) P_i) tr(rho(x) P_j) / 2^n. Its eigenvectors give the Mercer operators
A_i = sum_j V_ji P_j / 2^(n/2) and its eigenvalues the GFQK spectrum. All orthogonality statements hold under the
empirical measure of the dataset that built the decomposition.
"""
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.errors import CapacityError, DegenerateError, FormatError, InputError
from src.kernels.gram_repository import dataset_hash
from src.kernels.trace_kernels import FeatureTable
from src.quantum_utils.pauli_algebra import Basis, KernelSpec, enumerate_paulis
from src.quantum_utils.state_simulation import EmbeddingConfig, StateVector, embed_dataset
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)

MAX_MERCER_QUBITS = 6
MAX_MERCER_LPQK_QUBITS = 3
MODE_TOLERANCE = 1e-10
MAGIC = b"MERCERV1"


@dataclass(frozen=True, eq=False)
class MercerDecomposition:
    n: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    dataset_hash: str = ""

    def __post_init__(self):
        dim = 4 ** self.n
        if self.eigenvalues.shape != (dim,) or self.vectors.shape != (dim, dim):
            raise InputError(f"A {self.n}-qubit decomposition needs {dim} eigenpairs.")

    def nonzero_modes(self, tolerance: float = MODE_TOLERANCE) -> np.ndarray:
        return np.flatnonzero(self.eigenvalues > tolerance)


def _check_capacity(n: int):
    if n > MAX_MERCER_QUBITS:
        raise CapacityError(f"The Mercer operator is 4^n x 4^n and limited to {MAX_MERCER_QUBITS} qubits, got {n}.")


def normalized_bloch_table(states: Sequence[StateVector]) -> np.ndarray:
    """
    (N, 4^n) table of tr(rho P_bar_j) over the canonical Pauli order.
    """
    n = states[0].n
    _check_capacity(n)
    return FeatureTable.from_states(states, enumerate_paulis(n)).normalized()


def feature_gram_operator(dataset, cfg: EmbeddingConfig) -> np.ndarray:
    """
    G_ij = (1/N) sum_x tr(rho(x) P_bar_i) tr(rho(x) P_bar_j).
    :param dataset: nonempty sequence of input vectors.
    :param cfg: embedding configuration, at most 6 qubits.
    :return: symmetric PSD 4^n x 4^n matrix with trace equal to the mean purity.
    """
    _check_capacity(cfg.n)
    table = normalized_bloch_table(embed_dataset(dataset, cfg))
    operator = table.T @ table / table.shape[0]
    return (operator + operator.T) / 2


def diagonalize(G: np.ndarray, source_hash: str = "") -> MercerDecomposition:
    """
    Eigendecomposition sorted by descending eigenvalue; each eigenvector's first nonzero coefficient is positive.
    :param G: symmetric 4^n x 4^n matrix.
    :param source_hash: hash of the dataset G was built from.
    :return:
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InputError(f"The operator must be square, got shape {G.shape}.")
    n = round(math.log(G.shape[0], 4)) if G.shape[0] > 0 else 0
    if G.shape[0] == 0 or 4 ** n != G.shape[0]:
        raise InputError(f"The operator dimension {G.shape[0]} is not a power of 4.")
    _check_capacity(n)
    if np.max(np.abs(G - G.T)) > 1e-12 * max(1.0, float(np.max(np.abs(G)))):
        raise InputError("The operator is not symmetric.")
    eigenvalues, vectors = linalg.eigh(G)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]
    for column in range(vectors.shape[1]):
        nonzero = np.flatnonzero(np.abs(vectors[:, column]) > 1e-12)
        if nonzero.size and vectors[nonzero[0], column] < 0:
            vectors[:, column] = -vectors[:, column]
    logger.debug("Diagonalized %d-qubit operator, top eigenvalue %.6g", n, eigenvalues[0])
    return MercerDecomposition(n=n, eigenvalues=eigenvalues, vectors=vectors, dataset_hash=source_hash)


def decompose(dataset, cfg: EmbeddingConfig) -> MercerDecomposition:
    return diagonalize(feature_gram_operator(dataset, cfg), source_hash=dataset_hash(dataset))


def mode_features(md: MercerDecomposition, dataset, cfg: EmbeddingConfig) -> np.ndarray:
    """
    (N, 4^n) table of tr(rho(x) A_i) for every Mercer mode.
    """
    if cfg.n != md.n:
        raise InputError(f"Decomposition has {md.n} qubits but the embedding has {cfg.n}.")
    return normalized_bloch_table(embed_dataset(dataset, cfg)) @ md.vectors


def eigenfunctions(md: MercerDecomposition, dataset, cfg: EmbeddingConfig,
                   modes: Optional[Sequence[int]] = None, tolerance: float = MODE_TOLERANCE) -> np.ndarray:
    modes = md.nonzero_modes(tolerance) if modes is None else np.asarray(modes, dtype=int)
    degenerate = [int(mode) for mode in modes if md.eigenvalues[mode] <= tolerance]
    if degenerate:
        raise DegenerateError(f"Modes {degenerate[:5]} have eigenvalues below {tolerance}.")
    return mode_features(md, dataset, cfg)[:, modes] / np.sqrt(md.eigenvalues[modes])


def eigenfunction(md: MercerDecomposition, i: int, x, cfg: EmbeddingConfig,
                  tolerance: float = MODE_TOLERANCE) -> float:
    """
    phi_i(x) = tr(rho(x) A_i) / sqrt(gamma_i).
    """
    if not 0 <= i < len(md.eigenvalues):
        raise InputError(f"Mode {i} is outside 0..{len(md.eigenvalues) - 1}.")
    return float(eigenfunctions(md, [x], cfg, modes=[i], tolerance=tolerance)[0, 0])


def _check_mode_weights(weights, md: MercerDecomposition) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != md.eigenvalues.shape:
        raise InputError(f"Expected {len(md.eigenvalues)} mode weights, got {weights.shape[0]}.")
    if np.any(weights < 0):
        raise InputError("Mode weights must be nonnegative.")
    return weights


def mercer_gram(dataset, weights, md: MercerDecomposition, cfg: EmbeddingConfig, other=None) -> np.ndarray:
    """
    Gram of k(x, x') = sum_i 2^n w_i tr(rho(x) A_i) tr(rho(x') A_i).
    """
    weights = _check_mode_weights(weights, md)
    left = mode_features(md, dataset, cfg)
    right = left if other is None else mode_features(md, other, cfg)
    return (left * (2 ** md.n * weights)) @ right.T


def mercer_gtqk(x, x_prime, weights, md: MercerDecomposition, cfg: EmbeddingConfig) -> float:
    return float(mercer_gram([x], weights, md, cfg, other=[x_prime])[0, 0])


def mercer_lpqk_weights(spec: KernelSpec, md: MercerDecomposition) -> np.ndarray:
    """
    Mode weights of the Mercer counterpart of a Pauli-basis kernel. The basis rotation taking normalized Paulis to
    Mercer operators is only known through V, so the i-th Pauli of the canonical order is paired with the i-th mode
    (descending eigenvalue) and keeps its weight.
    :param spec: Pauli-basis spec, usually an s-lpqk, S-lpqk or h-body preset.
    :param md: decomposition on at most 3 qubits.
    :return: 4^n mode weights.
    """
    if md.n > MAX_MERCER_LPQK_QUBITS:
        raise CapacityError(f"Mercer LPQKs are limited to {MAX_MERCER_LPQK_QUBITS} qubits, got {md.n}.")
    if spec.basis != Basis.PAULI:
        raise InputError("Mercer LPQK weights are derived from a Pauli-basis spec.")
    if spec.n != md.n:
        raise InputError(f"Spec acts on {spec.n} qubits but the decomposition has {md.n}.")
    position = {pauli: index for index, pauli in enumerate(enumerate_paulis(md.n))}
    weights = np.zeros(md.eigenvalues.shape[0])
    for pauli, weight in spec.weights.items():
        weights[position[pauli]] = weight
    return weights


def mercer_lpqk_gram(dataset, spec: KernelSpec, md: MercerDecomposition, cfg: EmbeddingConfig,
                     other=None) -> np.ndarray:
    return mercer_gram(dataset, mercer_lpqk_weights(spec, md), md, cfg, other=other)


def lego_rkhs_orthogonality(md: MercerDecomposition, dataset, cfg: EmbeddingConfig,
                            check_dataset: bool = True, tolerance: float = MODE_TOLERANCE) -> float:
    """
    max_{i != j} |(1/N) sum_x tr(rho(x) A_i) tr(rho(x) A_j)| over modes with gamma above tolerance.
    :param check_dataset: reject datasets other than the one that built the decomposition.
    :return:
    """
    if check_dataset and md.dataset_hash and dataset_hash(dataset) != md.dataset_hash:
        raise InputError("The dataset does not match the one the decomposition was built from.")
    modes = md.nonzero_modes(tolerance)
    if modes.size < 2:
        return 0.0
    features = mode_features(md, dataset, cfg)[:, modes]
    correlations = features.T @ features / features.shape[0]
    np.fill_diagonal(correlations, 0.0)
    return float(np.max(np.abs(correlations)))


def integral_operator(gram_values: np.ndarray, functions: np.ndarray) -> np.ndarray:
    """
    (T_k f)(x_a) = (1/N) sum_b k(x_a, x_b) f(x_b) under the empirical measure.
    """
    return gram_values @ functions / gram_values.shape[0]


class MercerRepository:
    """
    JSON for the spectrum, a little-endian binary file for V (16-byte header: magic, u32 n, u32 reserved; then f64
    entries in column-major order).
    """

    @classmethod
    def to_json(cls, md: MercerDecomposition) -> str:
        return json.dumps({"n": md.n,
                           "dataset_hash": md.dataset_hash,
                           "eigenvalues": [float(value) for value in md.eigenvalues]}, indent=2)

    @classmethod
    def to_bytes(cls, md: MercerDecomposition) -> bytes:
        header = MAGIC + struct.pack("<II", md.n, 0)
        return header + np.asarray(md.vectors, dtype="<f8").tobytes(order="F")

    @classmethod
    def from_parts(cls, json_text: str, payload: bytes) -> MercerDecomposition:
        """
        :param json_text: output of to_json.
        :param payload: output of to_bytes.
        :return:
        """
        if len(payload) < 16 or payload[:8] != MAGIC:
            raise FormatError("Mercer basis file does not start with the MERCERV1 magic.")
        n, _ = struct.unpack("<II", payload[8:16])
        dim = 4 ** n
        if len(payload) != 16 + 8 * dim * dim:
            raise FormatError(f"Mercer basis file has {len(payload) - 16} payload bytes, expected {8 * dim * dim}.")
        vectors = np.frombuffer(payload[16:], dtype="<f8").reshape((dim, dim), order="F").copy()
        data = json.loads(json_text)
        if int(data["n"]) != n:
            raise FormatError("Mercer JSON and basis file disagree on the qubit count.")
        return MercerDecomposition(n=n, eigenvalues=np.array(data["eigenvalues"], dtype=float), vectors=vectors,
                                   dataset_hash=data.get("dataset_hash", ""))

    @classmethod
    def save(cls, md: MercerDecomposition, json_path: Union[str, Path], basis_path: Union[str, Path]) -> Tuple:
        return (TaskRunner.write_atomically(json_path, cls.to_json(md)),
                TaskRunner.write_atomically(basis_path, cls.to_bytes(md)))

    @classmethod
    def load(cls, json_path: Union[str, Path], basis_path: Union[str, Path]) -> MercerDecomposition:
        return cls.from_parts(Path(json_path).read_text(), Path(basis_path).read_bytes())
