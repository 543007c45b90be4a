import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import bell_state, dense_embed, dense_expectation, dense_partial_trace
from src.errors import CapacityError, InputError
from src.quantum_utils.pauli_algebra import PauliString
from src.quantum_utils.state_simulation import (Coupling, DensityMatrix, EmbeddingConfig, StateVector, embed,
                                                overlap, pauli_expectation, reduced_density_matrix)


class TestEmbeddingConfig:
    """Validation of the embedding parameters."""

    def test_rejects_bandwidth_outside_unit_interval(self):
        with pytest.raises(InputError):
            EmbeddingConfig(n=2, bandwidth=1.5)

    def test_rejects_too_many_qubits(self):
        with pytest.raises(CapacityError):
            EmbeddingConfig(n=25)

    def test_rejects_zero_layers(self):
        with pytest.raises(InputError):
            EmbeddingConfig(n=2, layers=0)

    def test_ring_coupling_pairs(self):
        assert EmbeddingConfig(n=4, coupling=Coupling.RING).pairs() == [(0, 1), (1, 2), (2, 3), (3, 0)]
        assert EmbeddingConfig(n=2, coupling=Coupling.RING).pairs() == [(0, 1)]

    def test_dict_round_trip(self):
        cfg = EmbeddingConfig(n=3, bandwidth=0.25, layers=3, coupling=Coupling.RING)
        assert EmbeddingConfig.from_dict(cfg.to_dict()) == cfg


class TestEmbed:
    """IQP embedding against closed forms and a dense unitary oracle."""

    def test_zero_bandwidth_returns_all_zeros_state(self, rng):
        state = embed(rng.normal(size=4), EmbeddingConfig(n=4, bandwidth=0.0, layers=2))
        expected = np.zeros(16)
        expected[0] = 1.0
        assert_allclose(state.amplitudes, expected, atol=1e-12)

    def test_single_qubit_closed_form(self):
        state = embed([np.pi / 2], EmbeddingConfig(n=1, bandwidth=1.0, layers=1))
        expected = np.array([np.exp(1j * np.pi / 2), np.exp(-1j * np.pi / 2)]) / np.sqrt(2)
        assert_allclose(state.amplitudes, expected, atol=1e-12)

    @pytest.mark.parametrize("coupling", [Coupling.ALL_PAIRS, Coupling.RING])
    def test_matches_dense_oracle(self, rng, coupling):
        cfg = EmbeddingConfig(n=3, bandwidth=0.5, layers=2, coupling=coupling)
        x = rng.uniform(-np.pi, np.pi, size=3)
        assert_allclose(embed(x, cfg).amplitudes, dense_embed(x, cfg), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            embed([0.1, 0.2], EmbeddingConfig(n=3))

    def test_non_finite_input(self):
        with pytest.raises(InputError):
            embed([0.1, np.nan], EmbeddingConfig(n=2))


class TestPauliExpectation:
    """tr(rho P) on eigenstates and against dense operators."""

    def test_z_on_all_zeros(self):
        assert pauli_expectation(StateVector.basis_state(3), PauliString("ZII")) == pytest.approx(1.0)

    def test_x_on_plus_state(self):
        state = StateVector(1, np.array([1, 1]) / np.sqrt(2))
        assert pauli_expectation(state, PauliString("X")) == pytest.approx(1.0)

    def test_identity_is_one(self, rng):
        state = embed(rng.normal(size=3), EmbeddingConfig(n=3, bandwidth=0.7))
        assert pauli_expectation(state, PauliString("III")) == 1.0

    def test_matches_dense_oracle(self, rng):
        cfg = EmbeddingConfig(n=4, bandwidth=0.8)
        x = rng.uniform(-np.pi, np.pi, size=4)
        state = embed(x, cfg)
        for symbols in ("IXIY", "ZZII", "YIXZ", "XYZX"):
            assert pauli_expectation(state, PauliString(symbols)) == pytest.approx(
                dense_expectation(dense_embed(x, cfg), symbols), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            pauli_expectation(StateVector.basis_state(2), PauliString("ZZZ"))


class TestReducedDensityMatrix:
    """Partial traces against a dense oracle."""

    def test_bell_pair_is_maximally_mixed(self):
        rho = reduced_density_matrix(StateVector(2, bell_state()), [0])
        assert_allclose(rho.entries, np.eye(2) / 2, atol=1e-12)
        assert rho.purity() == pytest.approx(0.5)

    def test_matches_dense_oracle(self, rng):
        cfg = EmbeddingConfig(n=4, bandwidth=0.6)
        x = rng.uniform(-np.pi, np.pi, size=4)
        rho = reduced_density_matrix(embed(x, cfg), [2, 0])
        assert_allclose(rho.entries, dense_partial_trace(dense_embed(x, cfg), 4, [0, 2]), atol=1e-12)

    def test_full_system_is_pure(self, rng):
        state = embed(rng.normal(size=3), EmbeddingConfig(n=3, bandwidth=0.4))
        assert reduced_density_matrix(state, [0, 1, 2]).purity() == pytest.approx(1.0)

    @pytest.mark.parametrize("subset", [[], [3], [-1]])
    def test_invalid_subset(self, subset):
        with pytest.raises(InputError):
            reduced_density_matrix(StateVector.basis_state(3), subset)

    def test_density_matrix_rejects_bad_trace(self):
        with pytest.raises(InputError):
            DensityMatrix(2, np.eye(2))


class TestOverlap:
    """Fidelity of pure states."""

    def test_self_overlap_is_one(self, rng):
        state = embed(rng.normal(size=3), EmbeddingConfig(n=3, bandwidth=0.9))
        assert overlap(state, state) == pytest.approx(1.0)

    def test_orthogonal_states(self):
        assert overlap(StateVector.basis_state(2, 0), StateVector.basis_state(2, 3)) == 0.0

    def test_symmetric(self, rng):
        cfg = EmbeddingConfig(n=3, bandwidth=0.9)
        a, b = embed(rng.normal(size=3), cfg), embed(rng.normal(size=3), cfg)
        assert overlap(a, b) == pytest.approx(overlap(b, a), abs=1e-15)

    def test_state_vector_rejects_unnormalized(self):
        with pytest.raises(InputError):
            StateVector(1, np.array([1.0, 1.0]))
