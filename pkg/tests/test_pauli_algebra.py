import itertools
from math import comb

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import dense_pauli
from src.errors import CapacityError, InputError
from src.quantum_utils.pauli_algebra import (Basis, KernelSpec, PauliString, Preset, degeneracy, enumerate_h_body,
                                             enumerate_paulis, enumerate_subsystem, pauli_count, preset_weights)


class TestPauliString:
    """Labels, supports and masks."""

    def test_support_and_weight(self):
        P = PauliString("XIZY")
        assert P.support == (0, 2, 3)
        assert P.weight == 3
        assert P.letters == "XZY"

    def test_invalid_symbol(self):
        with pytest.raises(InputError):
            PauliString("XA")

    def test_from_support(self):
        assert PauliString.from_support(4, [1, 3], "XY") == PauliString("IXIY")

    def test_matrix_matches_kron(self):
        assert_allclose(PauliString("XYZ").matrix(), dense_pauli("XYZ"))

    def test_masks_reproduce_matrix_action(self):
        P = PauliString("YXZ")
        x_mask, z_mask, y_count = P.masks()
        matrix = P.matrix()
        for b in range(8):
            column = np.zeros(8, dtype=complex)
            column[b ^ x_mask] = 1j ** y_count * (-1) ** bin(b & z_mask).count("1")
            assert_allclose(matrix[:, b], column)


class TestEnumeration:
    """Counting identities against brute force."""

    @pytest.mark.parametrize("n", range(1, 9))
    def test_pauli_count_matches_brute_force(self, n):
        counts = [0] * (n + 1)
        if n <= 5:
            for symbols in itertools.product("IXYZ", repeat=n):
                counts[sum(symbol != "I" for symbol in symbols)] += 1
        else:
            counts = [len(enumerate_h_body(n, H)) for H in range(n + 1)]
        assert counts == [pauli_count(n, H) for H in range(n + 1)]

    def test_two_body_count_on_eight_qubits(self):
        assert pauli_count(8, 2) == 252
        assert len(enumerate_h_body(8, 2)) == 252

    @pytest.mark.parametrize("n", range(1, 9))
    def test_degeneracy_matches_subset_count(self, n):
        for S in range(n + 1):
            subsets = list(itertools.combinations(range(n), S))
            for H in range(S + 1):
                fixed = set(range(H))
                assert degeneracy(n, S, H) == sum(fixed <= set(subset) for subset in subsets)

    def test_degeneracy_rejects_h_above_s(self):
        with pytest.raises(InputError):
            degeneracy(4, 1, 2)

    def test_canonical_order(self):
        paulis = enumerate_paulis(2)
        assert len(paulis) == 16
        assert [str(P) for P in paulis[:5]] == ["II", "XI", "YI", "ZI", "IX"]
        assert paulis == sorted(paulis, key=PauliString.sort_key)

    def test_subsystem_strings(self):
        paulis = enumerate_subsystem(3, [0, 2])
        assert len(paulis) == 16
        assert all(1 not in P.support for P in paulis)

    def test_enumeration_capacity_guard(self):
        with pytest.raises(CapacityError):
            enumerate_paulis(11)


class TestPresets:
    """Weight maps of the existing kernels."""

    def test_gfqk_weights(self):
        spec = preset_weights(Preset.GFQK, 3)
        assert spec.p == 64
        assert_allclose(spec.weight_vector(), 1 / 8)

    def test_s_lpqk_support(self):
        spec = preset_weights("s-lpqk", 4, s=[1, 2])
        assert spec.p == 16
        assert all(set(P.support) <= {1, 2} for P in spec.paulis())
        assert_allclose(spec.weight_vector(), 1 / 4)

    def test_size_preset_weights(self):
        n, S = 4, 2
        spec = preset_weights("S-lpqk", n, S=S)
        for P, weight in spec.weights.items():
            expected = degeneracy(n, S, P.weight) / (2 ** S * np.sqrt(comb(n, S)))
            assert weight == pytest.approx(expected)
        assert spec.max_weight == S

    def test_h_body_weights(self):
        spec = preset_weights("h-body", 3, H=2)
        assert spec.p == 27
        assert_allclose(spec.weight_vector(), 1 / np.sqrt(27))

    @pytest.mark.parametrize("parameters", [{}, {"s": [5]}])
    def test_invalid_subsystem(self, parameters):
        with pytest.raises(InputError):
            preset_weights("s-lpqk", 3, **parameters)

    def test_invalid_size(self):
        with pytest.raises(InputError):
            preset_weights("S-lpqk", 3, S=4)


class TestKernelSpec:
    """Validation and serialization of weight maps."""

    def test_drops_zero_weights(self):
        spec = KernelSpec(n=2, weights={PauliString("XI"): 0.0, PauliString("ZZ"): 0.5})
        assert spec.p == 1

    def test_rejects_negative_weights(self):
        with pytest.raises(InputError):
            KernelSpec(n=1, weights={PauliString("X"): -1.0})

    def test_rejects_wrong_qubit_count(self):
        with pytest.raises(InputError):
            KernelSpec(n=2, weights={PauliString("X"): 1.0})

    def test_normalization_enforced_on_request(self):
        with pytest.raises(InputError):
            KernelSpec(n=1, weights={PauliString("X"): 0.5}, enforce_normalization=True)
        KernelSpec(n=1, weights={PauliString("X"): 0.6, PauliString("Z"): 0.8}, enforce_normalization=True)

    def test_dense_weights(self):
        spec = preset_weights("h-body", 2, H=1)
        dense = spec.dense_weights()
        assert dense.shape == (16,)
        assert np.count_nonzero(dense) == 6

    def test_custom_dict_round_trip(self):
        spec = KernelSpec(n=2, weights={PauliString("XZ"): 0.3, PauliString("IY"): 0.7})
        restored = KernelSpec.from_dict(spec.to_dict(), 2)
        assert restored.weights == spec.weights

    def test_preset_dict_round_trip(self):
        spec = KernelSpec.from_dict({"preset": "h-body", "H": 1}, 3)
        assert spec.preset == Preset.H_BODY
        assert spec.p == 9

    def test_mercer_basis_keys(self):
        spec = KernelSpec(n=1, weights={3: 0.2, 0: 0.5}, basis=Basis.MERCER)
        assert list(spec.weights) == [0, 3]
