import itertools
import os
from functools import reduce

import numpy as np
import pytest

from src.quantum_utils.state_simulation import EmbeddingConfig

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_pauli(symbols: str) -> np.ndarray:
    return reduce(np.kron, [PAULI_MATRICES[symbol] for symbol in symbols])


def dense_embed(x, cfg: EmbeddingConfig) -> np.ndarray:
    """Builds D(lambda x) and H^n as explicit 2^n x 2^n matrices and applies them layer by layer."""
    n = cfg.n
    y = cfg.bandwidth * np.asarray(x, dtype=float)
    hadamards = reduce(np.kron, [HADAMARD] * n)
    if cfg.coupling.value == "all-pairs":
        pairs = list(itertools.combinations(range(n), 2))
    else:
        pairs = [(0, 1)] if n == 2 else ([(j, (j + 1) % n) for j in range(n)] if n > 2 else [])
    generator = np.zeros((2 ** n, 2 ** n), dtype=complex)
    z = [dense_pauli("".join("Z" if k == j else "I" for k in range(n))) for j in range(n)]
    for j in range(n):
        generator += y[j] * z[j]
    for j, k in pairs:
        generator += y[j] * y[k] * z[j] @ z[k]
    diagonal = np.diag(np.exp(1j * np.diag(generator)))
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1.0
    for _ in range(cfg.layers):
        psi = diagonal @ (hadamards @ psi)
    return psi


def dense_expectation(psi: np.ndarray, symbols: str) -> float:
    return float(np.real(np.vdot(psi, dense_pauli(symbols) @ psi)))


def dense_partial_trace(psi: np.ndarray, n: int, kept) -> np.ndarray:
    kept = sorted(kept)
    rho = np.outer(psi, psi.conj()).reshape((2,) * (2 * n))
    traced = [q for q in range(n) if q not in kept]
    for offset, qubit in enumerate(traced):
        axis = qubit - offset
        rho = np.trace(rho, axis1=axis, axis2=axis + rho.ndim // 2)
    size = 2 ** len(kept)
    return rho.reshape(size, size)


def bell_state() -> np.ndarray:
    return np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def make_dataset(rng):
    def build(N: int, n: int, scale: float = np.pi):
        return rng.uniform(-scale, scale, size=(N, n))
    return build


@pytest.fixture
def fashion_mnist_paths():
    root = os.environ.get("QKERN_FASHION_MNIST")
    if not root:
        pytest.skip("QKERN_FASHION_MNIST is not set")
    return (os.path.join(root, "t10k-images-idx3-ubyte"), os.path.join(root, "t10k-labels-idx1-ubyte"))
