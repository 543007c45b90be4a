import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

from src.errors import CapacityError, InputError

PAULI_SYMBOLS = "IXYZ"
MEASUREMENT_SYMBOLS = "XYZ"

# exhaustive 4^n enumeration and dense storage guards
MAX_ENUMERATED_QUBITS = 10
MAX_DENSE_WEIGHT_QUBITS = 8

_SINGLE_QUBIT_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """
    n-qubit Pauli label such as "XIZY". Position j acts on qubit j, qubit 0 being the most significant bit of the
    amplitude index.
    """
    symbols: str

    def __post_init__(self):
        if len(self.symbols) == 0:
            raise InputError("A Pauli string needs at least one qubit.")
        invalid = set(self.symbols) - set(PAULI_SYMBOLS)
        if invalid:
            raise InputError(f"Invalid Pauli symbols {sorted(invalid)} in {self.symbols!r}.")

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls("I" * n)

    @classmethod
    def from_support(cls, n: int, support: Sequence[int], letters: Sequence[str]) -> "PauliString":
        """
        Builds the string acting with letters[k] on qubit support[k] and trivially elsewhere.
        :param n: qubit count.
        :param support: qubit indices.
        :param letters: one of X, Y, Z per support qubit.
        :return:
        """
        if len(support) != len(letters):
            raise InputError("Support and letters must have the same length.")
        symbols = ["I"] * n
        for qubit, letter in zip(support, letters):
            if not 0 <= qubit < n:
                raise InputError(f"Qubit {qubit} is outside 0..{n - 1}.")
            symbols[qubit] = letter
        return cls("".join(symbols))

    @property
    def n(self) -> int:
        return len(self.symbols)

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, symbol in enumerate(self.symbols) if symbol != "I")

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def letters(self) -> str:
        return "".join(symbol for symbol in self.symbols if symbol != "I")

    def masks(self) -> Tuple[int, int, int]:
        """
        Bit masks of the string in the amplitude-index convention.
        :return: (x_mask, z_mask, y_count) with P|b> = i^y_count * (-1)^popcount(b & z_mask) |b ^ x_mask>.
        """
        x_mask, z_mask, y_count = 0, 0, 0
        for j, symbol in enumerate(self.symbols):
            bit = 1 << (self.n - 1 - j)
            if symbol in "XY":
                x_mask |= bit
            if symbol in "YZ":
                z_mask |= bit
            if symbol == "Y":
                y_count += 1
        return x_mask, z_mask, y_count

    def sort_key(self) -> Tuple[int, Tuple[int, ...], Tuple[int, ...]]:
        return self.weight, self.support, tuple(MEASUREMENT_SYMBOLS.index(letter) for letter in self.letters)

    def matrix(self) -> np.ndarray:
        if self.n > MAX_ENUMERATED_QUBITS:
            raise CapacityError(f"Dense Pauli matrices are limited to {MAX_ENUMERATED_QUBITS} qubits.")
        return reduce(np.kron, [_SINGLE_QUBIT_MATRICES[symbol] for symbol in self.symbols])

    def __str__(self):
        return self.symbols


def pauli_count(n: int, H: int) -> int:
    """
    d_H = C(n, H) * 3^H, the number of Pauli strings of weight exactly H.
    """
    if not 0 <= H <= n:
        return 0
    return int(comb(n, H, exact=True)) * 3 ** H


def enumerate_h_body(n: int, H: int) -> List[PauliString]:
    """
    All Pauli strings of weight exactly H, ordered lexicographically by support and then by letters (X < Y < Z).
    :param n: qubit count.
    :param H: body count.
    :return:
    """
    if n < 1:
        raise InputError("The qubit count must be at least 1.")
    if not 0 <= H <= n:
        raise InputError(f"The body count H={H} must lie in 0..{n}.")
    return [PauliString.from_support(n, support, letters)
            for support in itertools.combinations(range(n), H)
            for letters in itertools.product(MEASUREMENT_SYMBOLS, repeat=H)]


def enumerate_paulis(n: int, max_weight: Optional[int] = None) -> List[PauliString]:
    """
    Canonical order over all strings of weight <= max_weight: by weight, then support, then letters.
    """
    max_weight = n if max_weight is None else max_weight
    if max_weight == n and n > MAX_ENUMERATED_QUBITS:
        raise CapacityError(f"Exhaustive Pauli enumeration is limited to {MAX_ENUMERATED_QUBITS} qubits.")
    if not 0 <= max_weight <= n:
        raise InputError(f"The maximal weight {max_weight} must lie in 0..{n}.")
    return [pauli for H in range(max_weight + 1) for pauli in enumerate_h_body(n, H)]


def enumerate_subsystem(n: int, subsystem: Sequence[int]) -> List[PauliString]:
    """
    The 4^|s| strings supported inside the qubit subset s, in canonical order.
    """
    qubits = _validate_subsystem(n, subsystem)
    return [PauliString.from_support(n, support, letters)
            for H in range(len(qubits) + 1)
            for support in itertools.combinations(qubits, H)
            for letters in itertools.product(MEASUREMENT_SYMBOLS, repeat=H)]


def degeneracy(n: int, S: int, H: int) -> int:
    """
    D^(S,H) = C(n - H, S - H): how many size-S subsets contain a fixed H-subset.
    """
    if not 0 <= H <= S <= n:
        raise InputError(f"Degeneracy needs 0 <= H <= S <= n, got n={n}, S={S}, H={H}.")
    return int(comb(n - H, S - H, exact=True))


def _validate_subsystem(n: int, subsystem: Sequence[int]) -> Tuple[int, ...]:
    qubits = tuple(sorted(set(int(q) for q in subsystem)))
    if len(qubits) == 0:
        raise InputError("The subsystem must contain at least one qubit.")
    if qubits[0] < 0 or qubits[-1] >= n:
        raise InputError(f"Subsystem {list(qubits)} is outside 0..{n - 1}.")
    return qubits


class Preset(str, Enum):
    GFQK = "gfqk"
    S_SUBSET = "s-lpqk"
    S_SIZE = "S-lpqk"
    H_BODY = "h-body"
    CUSTOM = "custom"


class Basis(str, Enum):
    PAULI = "pauli"
    MERCER = "mercer"


@dataclass(frozen=True)
class KernelSpec:
    """
    Weight assignment of one GTQK. In the Pauli basis the keys are PauliStrings and the kernel reads
    k(x, x') = sum_i w_i tr(rho(x) P_i) tr(rho(x') P_i); in the Mercer basis the keys are mode indices.
    Zero weights are dropped, so len(weights) is the sparse support size p.
    """
    n: int
    weights: Mapping[Hashable, float]
    preset: Preset = Preset.CUSTOM
    parameters: Mapping[str, object] = field(default_factory=dict)
    basis: Basis = Basis.PAULI
    enforce_normalization: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise InputError("The qubit count must be at least 1.")
        weights = {key: float(value) for key, value in self.weights.items() if value != 0}
        negative = [str(key) for key, value in weights.items() if value < 0 or not math.isfinite(value)]
        if negative:
            raise InputError(f"Weights must be finite and nonnegative; offending keys: {negative[:5]}.")
        if self.basis == Basis.PAULI:
            for key in weights:
                if not isinstance(key, PauliString) or key.n != self.n:
                    raise InputError(f"Weight key {key!r} is not a {self.n}-qubit PauliString.")
            ordered = sorted(weights.items(), key=lambda item: item[0].sort_key())
        else:
            ordered = sorted(weights.items(), key=lambda item: int(item[0]))
        object.__setattr__(self, "weights", dict(ordered))
        object.__setattr__(self, "preset", Preset(self.preset))
        object.__setattr__(self, "basis", Basis(self.basis))
        if self.enforce_normalization:
            squared = sum(value ** 2 for value in self.weights.values())
            if abs(squared - 1.0) > 1e-10:
                raise InputError(f"Normalization requires sum w^2 = 1, got {squared:.12g}.")

    @property
    def p(self) -> int:
        return len(self.weights)

    @property
    def max_weight(self) -> int:
        if self.basis != Basis.PAULI:
            raise InputError("Pauli weight is only defined for Pauli-basis specs.")
        return max((pauli.weight for pauli in self.weights), default=0)

    def paulis(self) -> List[PauliString]:
        return list(self.weights.keys())

    def weight_vector(self) -> np.ndarray:
        return np.fromiter(self.weights.values(), dtype=float, count=self.p)

    def squared_norm(self) -> float:
        return float(np.sum(self.weight_vector() ** 2))

    def dense_weights(self) -> np.ndarray:
        """
        4^n weight vector in canonical Pauli order; only allowed up to 8 qubits.
        """
        if self.n > MAX_DENSE_WEIGHT_QUBITS:
            raise CapacityError(f"Dense weight storage is limited to {MAX_DENSE_WEIGHT_QUBITS} qubits.")
        return np.array([self.weights.get(pauli, 0.0) for pauli in enumerate_paulis(self.n)])

    def to_dict(self) -> Dict[str, object]:
        if self.preset != Preset.CUSTOM:
            return {"preset": self.preset.value, **{key: value for key, value in self.parameters.items()}}
        return {"preset": Preset.CUSTOM.value,
                "basis": self.basis.value,
                "weights": {str(key): value for key, value in self.weights.items()}}

    @classmethod
    def from_dict(cls, data: Mapping[str, object], n: int) -> "KernelSpec":
        preset = Preset(data.get("preset", Preset.CUSTOM.value))
        if preset == Preset.CUSTOM:
            basis = Basis(data.get("basis", Basis.PAULI.value))
            raw = data.get("weights") or {}
            if basis == Basis.PAULI:
                weights = {PauliString(str(key)): float(value) for key, value in raw.items()}
            else:
                weights = {int(key): float(value) for key, value in raw.items()}
            return cls(n=n, weights=weights, basis=basis,
                       enforce_normalization=bool(data.get("enforce_normalization", False)))
        parameters = {key: value for key, value in data.items() if key != "preset"}
        return preset_weights(preset, n, **parameters)


def preset_weights(preset, n: int, **parameters) -> KernelSpec:
    """
    Weight maps that recover the existing trace-induced kernels as GTQKs.
    :param preset: gfqk, s-lpqk (parameter s), S-lpqk (parameter S) or h-body (parameter H).
    :param n: qubit count.
    :return:
    """
    preset = Preset(preset)
    if preset == Preset.GFQK:
        if n > MAX_ENUMERATED_QUBITS:
            raise CapacityError(f"The gfqk preset enumerates 4^n strings and is limited to "
                                f"{MAX_ENUMERATED_QUBITS} qubits.")
        weight = 1.0 / 2 ** n
        weights = {pauli: weight for pauli in enumerate_paulis(n)}
        return KernelSpec(n=n, weights=weights, preset=preset, parameters={})

    if preset == Preset.S_SUBSET:
        if "s" not in parameters:
            raise InputError("The s-lpqk preset needs the subsystem parameter 's'.")
        qubits = _validate_subsystem(n, parameters["s"])
        weight = 1.0 / 2 ** len(qubits)
        weights = {pauli: weight for pauli in enumerate_subsystem(n, qubits)}
        return KernelSpec(n=n, weights=weights, preset=preset, parameters={"s": list(qubits)})

    if preset == Preset.S_SIZE:
        S = int(parameters.get("S", -1))
        if not 1 <= S <= n:
            raise InputError(f"The S-lpqk preset needs 1 <= S <= {n}, got {S}.")
        scale = 1.0 / (2 ** S * math.sqrt(comb(n, S, exact=True)))
        weights = {}
        for H in range(S + 1):
            weight = degeneracy(n, S, H) * scale
            weights.update({pauli: weight for pauli in enumerate_h_body(n, H)})
        return KernelSpec(n=n, weights=weights, preset=preset, parameters={"S": S})

    if preset == Preset.H_BODY:
        H = int(parameters.get("H", -1))
        if not 0 <= H <= n:
            raise InputError(f"The h-body preset needs 0 <= H <= {n}, got {H}.")
        weight = 1.0 / math.sqrt(pauli_count(n, H))
        weights = {pauli: weight for pauli in enumerate_h_body(n, H)}
        return KernelSpec(n=n, weights=weights, preset=preset, parameters={"H": H})

    raise InputError("Custom specs are built directly with KernelSpec.")
