import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import comb

from src.errors import InputError
from src.quantum_utils.pauli_algebra import (Basis, KernelSpec, PauliString, Preset, degeneracy,
                                             enumerate_h_body, pauli_count)
from src.quantum_utils.state_simulation import (EmbeddingConfig, StateVector, embed, embed_dataset,
                                                expectation_table, overlap, reduced_density_matrix,
                                                state_matrix)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """
    Column i holds tr(rho(x) P_i) for the i-th Pauli, row r for the r-th data point.
    """
    values: np.ndarray
    paulis: tuple

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != len(self.paulis):
            raise InputError(f"Feature table has {values.shape[1]} columns for {len(self.paulis)} Paulis.")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "paulis", tuple(self.paulis))

    @classmethod
    def from_states(cls, states: Sequence[StateVector], paulis: Sequence[PauliString]) -> "FeatureTable":
        n = states[0].n
        return cls(expectation_table(state_matrix(states), n, paulis), tuple(paulis))

    @classmethod
    def from_dataset(cls, dataset, paulis: Sequence[PauliString], cfg: EmbeddingConfig) -> "FeatureTable":
        return cls.from_states(embed_dataset(dataset, cfg), paulis)

    @property
    def n(self) -> int:
        return self.paulis[0].n

    @property
    def column_index(self) -> Dict[PauliString, int]:
        return {pauli: column for column, pauli in enumerate(self.paulis)}

    def normalized(self) -> np.ndarray:
        """
        Expectations of the 2^(-n/2)-normalized Paulis.
        """
        return self.values / math.sqrt(2 ** self.n)

    def columns(self, paulis: Sequence[PauliString]) -> np.ndarray:
        index = self.column_index
        missing = [str(pauli) for pauli in paulis if pauli not in index]
        if missing:
            raise InputError(f"Feature table lacks columns for {missing[:5]}.")
        return self.values[:, [index[pauli] for pauli in paulis]]


def weighted_gram(left: np.ndarray, weights: np.ndarray, right: Optional[np.ndarray] = None) -> np.ndarray:
    """
    K = F_left diag(w) F_right^T, the feature-first form of every Pauli-basis GTQK.
    """
    right = left if right is None else right
    return (left * weights) @ right.T


class PauliKernel:
    """
    GTQK in the Pauli basis: k(x, x') = sum_i w_i tr(rho(x) P_i) tr(rho(x') P_i) with un-normalized Paulis.
    """

    def __init__(self, spec: KernelSpec, cfg: EmbeddingConfig):
        if spec.basis != Basis.PAULI:
            raise InputError("PauliKernel needs a Pauli-basis spec; use mercer_gtqk for Mercer weights.")
        if spec.n != cfg.n:
            raise InputError(f"Kernel spec acts on {spec.n} qubits but the embedding has {cfg.n}.")
        if spec.p == 0:
            raise InputError("Kernel spec has an empty weight support.")
        self.spec = spec
        self.cfg = cfg
        self.paulis = spec.paulis()
        self.weights = spec.weight_vector()

    def features(self, dataset) -> FeatureTable:
        return FeatureTable.from_dataset(dataset, self.paulis, self.cfg)

    def matrix(self, dataset, other=None) -> np.ndarray:
        left = self.features(dataset).values
        right = None if other is None else self.features(other).values
        return weighted_gram(left, self.weights, right)

    def __call__(self, x, x_prime) -> float:
        return float(self.matrix([x], [x_prime])[0, 0])


class FidelityKernel:
    """
    GFQK evaluated directly as the state overlap |<psi(x)|psi(x')>|^2.
    """

    def __init__(self, cfg: EmbeddingConfig):
        self.cfg = cfg
        self.spec = None

    def description(self) -> Dict[str, object]:
        return {"preset": "gfqk", "n": self.cfg.n}

    def matrix(self, dataset, other=None) -> np.ndarray:
        left = state_matrix(embed_dataset(dataset, self.cfg))
        right = left if other is None else state_matrix(embed_dataset(other, self.cfg))
        return np.clip(np.abs(left.conj() @ right.T) ** 2, 0.0, 1.0)

    def __call__(self, x, x_prime) -> float:
        return overlap(embed(x, self.cfg), embed(x_prime, self.cfg))


class ProjectedKernel:
    """
    Sum of subsystem kernels tr(rho_s(x) rho_s(x')) over the given subsets, scaled by `scale`.
    """

    def __init__(self, subsets: Sequence[Sequence[int]], cfg: EmbeddingConfig, scale: float = 1.0):
        if len(subsets) == 0:
            raise InputError("At least one subsystem is needed.")
        self.subsets = [tuple(sorted(set(subset))) for subset in subsets]
        self.cfg = cfg
        self.scale = scale
        self.spec = None

    def description(self) -> Dict[str, object]:
        return {"kernel": "projected", "n": self.cfg.n, "subsets": [list(subset) for subset in self.subsets],
                "scale": self.scale}

    def _reduced_states(self, dataset) -> List[List[np.ndarray]]:
        states = embed_dataset(dataset, self.cfg)
        return [[reduced_density_matrix(state, subset).entries for state in states] for subset in self.subsets]

    def matrix(self, dataset, other=None) -> np.ndarray:
        left = self._reduced_states(dataset)
        right = left if other is None else self._reduced_states(other)
        total = 0.0
        for left_rhos, right_rhos in zip(left, right):
            a = np.stack([rho.reshape(-1) for rho in left_rhos])
            b = np.stack([rho.T.reshape(-1) for rho in right_rhos])
            total = total + np.real(a @ b.T)
        return self.scale * total

    def __call__(self, x, x_prime) -> float:
        return float(self.matrix([x], [x_prime])[0, 0])


def subsystem_overlap(a: StateVector, b: StateVector, s: Sequence[int]) -> float:
    rho = reduced_density_matrix(a, s).entries
    sigma = reduced_density_matrix(b, s).entries
    return float(np.real(np.sum(rho * sigma.T)))


def lego_kernel(x, x_prime, P: PauliString, cfg: EmbeddingConfig) -> float:
    """
    tr(rho(x) P_bar) tr(rho(x') P_bar) for the 2^(-n/2)-normalized Pauli P_bar.
    """
    if P.n != cfg.n:
        raise InputError(f"Pauli string acts on {P.n} qubits but the embedding has {cfg.n}.")
    table = FeatureTable.from_dataset([x, x_prime], [P], cfg).normalized()
    return float(table[0, 0] * table[1, 0])


def gtqk(x, x_prime, spec: KernelSpec, cfg: EmbeddingConfig) -> float:
    if spec.basis == Basis.MERCER:
        from src.kernels.mercer import mercer_gtqk
        if "decomposition" not in spec.parameters:
            raise InputError("A Mercer-basis spec must reference its decomposition.")
        md = spec.parameters["decomposition"]
        weights = np.zeros(len(md.eigenvalues))
        for mode, weight in spec.weights.items():
            weights[int(mode)] = weight
        return mercer_gtqk(x, x_prime, weights, md, cfg)
    return PauliKernel(spec, cfg)(x, x_prime)


def gfqk(x, x_prime, cfg: EmbeddingConfig) -> float:
    return FidelityKernel(cfg)(x, x_prime)


def s_lpqk(x, x_prime, s: Sequence[int], cfg: EmbeddingConfig) -> float:
    """
    tr(rho_s(x) rho_s(x')) on the subsystem s.
    """
    return ProjectedKernel([s], cfg)(x, x_prime)


def S_lpqk(x, x_prime, S: int, cfg: EmbeddingConfig) -> float:
    """
    (1 / sqrt(C(n, S))) * sum of s-LPQKs over every subset of size S.
    """
    if not 1 <= S <= cfg.n:
        raise InputError(f"S must lie in 1..{cfg.n}, got {S}.")
    subsets = list(itertools.combinations(range(cfg.n), S))
    return ProjectedKernel(subsets, cfg, scale=1.0 / math.sqrt(len(subsets)))(x, x_prime)


def h_body_lpqk(x, x_prime, H: int, cfg: EmbeddingConfig) -> float:
    """
    (1 / sqrt(d_H)) * sum over weight-H Paulis of tr(rho(x) P) tr(rho(x') P).
    """
    if not 0 <= H <= cfg.n:
        raise InputError(f"H must lie in 0..{cfg.n}, got {H}.")
    paulis = enumerate_h_body(cfg.n, H)
    table = FeatureTable.from_dataset([x, x_prime], paulis, cfg).values
    return float(table[0] @ table[1]) / math.sqrt(len(paulis))


def s_from_h(values: Sequence[float], n: int, S: int) -> float:
    """
    k_S = (1 / (2^S sqrt(C(n, S)))) * sum_{H <= S} sqrt(d_H) D^(S,H) k_H.
    :param values: k_H for H = 0..S.
    """
    if not 0 <= S <= n:
        raise InputError(f"S must lie in 0..{n}, got {S}.")
    if len(values) < S + 1:
        raise InputError(f"Need k_H for H = 0..{S}, got {len(values)} values.")
    total = sum(math.sqrt(pauli_count(n, H)) * degeneracy(n, S, H) * values[H] for H in range(S + 1))
    return total / (2 ** S * math.sqrt(comb(n, S, exact=True)))


def h_from_s(values: Sequence[float], n: int, H: int) -> float:
    """
    Closed-form inversion k_H = (1 / sqrt(d_H)) * sum_{S <= H} (-1)^(H-S) C(n-S, H-S) 2^S sqrt(C(n, S)) k_S.
    :param values: k_S for S = 0..H, with k_0 = 1.
    """
    if not 0 <= H <= n:
        raise InputError(f"H must lie in 0..{n}, got {H}.")
    if len(values) < H + 1:
        raise InputError(f"Need k_S for S = 0..{H}, got {len(values)} values.")
    if abs(values[0] - 1.0) > 1e-9:
        raise InputError(f"k_0 must equal 1, got {values[0]}.")
    total = sum((-1) ** (H - S) * comb(n - S, H - S, exact=True) * 2 ** S * math.sqrt(comb(n, S, exact=True))
                * values[S] for S in range(H + 1))
    return total / math.sqrt(pauli_count(n, H))


def p_lpqk_spec(paulis: Sequence[PauliString], p: int, seed: int) -> KernelSpec:
    """
    p-feature LPQK sum_{i <= p} (1 / sqrt(p)) tr(rho P_i) tr(rho' P_i) over a seeded random selection of p of the
    given Paulis. Selections for the same seed are nested prefixes of one permutation.
    """
    if not 1 <= p <= len(paulis):
        raise InputError(f"p must lie in 1..{len(paulis)}, got {p}.")
    order = np.random.default_rng(seed).permutation(len(paulis))
    chosen = [paulis[index] for index in order[:p]]
    return KernelSpec(n=chosen[0].n, weights={pauli: 1.0 / math.sqrt(p) for pauli in chosen},
                      preset=Preset.CUSTOM)


def make_kernel(spec: Optional[KernelSpec], cfg: EmbeddingConfig):
    """
    Evaluator for a spec; the gfqk preset (or no spec) is evaluated as a direct overlap.
    """
    if spec is None or spec.preset == Preset.GFQK:
        return FidelityKernel(cfg)
    return PauliKernel(spec, cfg)
