import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import InputError
from src.kernels.gram_repository import Estimator
from src.kernels.trace_kernels import PauliKernel
from src.measurement.classical_shadows import (ShadowRepository, ShadowSet, collect_dataset_shadows, collect_shadows,
                                               estimate_feature_table, estimate_pauli, shadow_gram,
                                               snapshot_values)
from src.quantum_utils.pauli_algebra import KernelSpec, PauliString, enumerate_h_body, preset_weights
from src.quantum_utils.state_simulation import EmbeddingConfig, StateVector, embed, pauli_expectation


class TestCollectShadows:
    """Sampling of random-Pauli snapshots."""

    def test_z_measurements_of_all_zeros_state(self):
        shadows = collect_shadows(StateVector.basis_state(3), 500, seed=1)
        z_measured = shadows.bases == 2
        assert z_measured.any()
        assert np.all(shadows.outcomes[z_measured] == 0)

    def test_basis_frequencies_are_uniform(self):
        shadows = collect_shadows(StateVector.basis_state(1), 30000, seed=2)
        frequencies = np.bincount(shadows.bases[:, 0], minlength=3) / shadows.T
        assert_allclose(frequencies, 1 / 3, atol=0.02)

    def test_same_seed_same_snapshots(self):
        state = embed([0.3, -0.8], EmbeddingConfig(n=2, bandwidth=0.9))
        first, second = collect_shadows(state, 200, seed=5), collect_shadows(state, 200, seed=5)
        assert np.array_equal(first.bases, second.bases)
        assert np.array_equal(first.outcomes, second.outcomes)

    @pytest.mark.parametrize("T", [0, -3, 2.5])
    def test_rejects_invalid_snapshot_count(self, T):
        with pytest.raises(InputError):
            collect_shadows(StateVector.basis_state(2), T, seed=0)

    def test_basis_string(self):
        shadows = ShadowSet(n=3, bases=np.array([[0, 1, 2]]), outcomes=np.array([[0, 1, 0]]))
        assert shadows.basis_string(0) == "XYZ"

    def test_dataset_streams_are_per_datum(self):
        cfg = EmbeddingConfig(n=2, bandwidth=0.5)
        data = np.array([[0.1, 0.2], [0.1, 0.2]])
        first, second = collect_dataset_shadows(data, cfg, 100, seed=4)
        assert not np.array_equal(first.bases, second.bases)


class TestEstimation:
    """Single-Pauli estimates and their concentration."""

    def test_identity_is_exactly_one(self):
        shadows = collect_shadows(StateVector.basis_state(2), 10, seed=0)
        assert estimate_pauli(shadows, PauliString("II")) == 1.0

    def test_z_on_all_zeros_concentrates(self):
        shadows = collect_shadows(StateVector.basis_state(3), 4000, seed=3)
        assert abs(estimate_pauli(shadows, PauliString("ZII")) - 1.0) < 0.15

    def test_snapshot_values_are_bounded(self):
        shadows = collect_shadows(StateVector.basis_state(3), 300, seed=4)
        values = snapshot_values(shadows, PauliString("XZY"))
        assert set(np.unique(np.abs(values))) <= {0.0, 27.0}

    def test_matches_exact_expectations(self):
        cfg = EmbeddingConfig(n=2, bandwidth=0.7)
        state = embed([1.1, -0.4], cfg)
        shadows = collect_shadows(state, 6000, seed=11)
        for P in enumerate_h_body(2, 1):
            assert estimate_pauli(shadows, P) == pytest.approx(pauli_expectation(state, P), abs=0.15)

    def test_eight_qubit_two_body_estimates(self, rng):
        state = embed(rng.uniform(-np.pi, np.pi, size=8), EmbeddingConfig(n=8, bandwidth=0.5))
        paulis = enumerate_h_body(8, 2)
        assert len(paulis) == 252
        exact = np.array([pauli_expectation(state, P) for P in paulis])
        fractions = []
        for seed in range(20):
            shadows = collect_shadows(state, 4000, seed=seed)
            estimates = np.array([estimate_pauli(shadows, P) for P in paulis])
            fractions.append(np.mean(np.abs(estimates - exact) <= 0.15))
        assert np.mean(fractions) >= 0.95

    @pytest.mark.parametrize("symbols", ["XII", "IZY", "YXZ"])
    def test_snapshot_mean_is_unbiased(self, symbols):
        state = embed([0.4, -1.3, 2.2], EmbeddingConfig(n=3, bandwidth=0.8))
        P = PauliString(symbols)
        T = 100000
        values = snapshot_values(collect_shadows(state, T, seed=17), P)
        assert abs(values.mean() - pauli_expectation(state, P)) <= 4 * np.sqrt(3 ** P.weight / T)

    def test_test_points_continue_the_training_streams(self):
        cfg = EmbeddingConfig(n=2, bandwidth=0.5)
        data = np.array([[0.1, 0.2], [0.7, -0.3], [1.2, 0.4]])
        together = collect_dataset_shadows(data, cfg, 50, seed=6)
        tail = collect_dataset_shadows(data[2:], cfg, 50, seed=6, offset=2)
        assert np.array_equal(together[2].bases, tail[0].bases)
        assert np.array_equal(together[2].outcomes, tail[0].outcomes)

    @pytest.mark.parametrize("groups", [0, 11])
    def test_group_count_must_fit(self, groups):
        shadows = collect_shadows(StateVector.basis_state(1), 10, seed=0)
        with pytest.raises(InputError):
            estimate_pauli(shadows, PauliString("Z"), groups=groups)

    def test_empty_shadow_set(self):
        shadows = ShadowSet(n=1, bases=np.zeros((0, 1)), outcomes=np.zeros((0, 1)))
        with pytest.raises(InputError):
            estimate_pauli(shadows, PauliString("Z"))

    def test_qubit_mismatch(self):
        shadows = collect_shadows(StateVector.basis_state(2), 10, seed=0)
        with pytest.raises(InputError):
            snapshot_values(shadows, PauliString("ZZZ"))

    def test_feature_table_shape(self):
        shadow_sets = [collect_shadows(StateVector.basis_state(2, index), 50, seed=index) for index in range(3)]
        assert estimate_feature_table(shadow_sets, enumerate_h_body(2, 1)).shape == (3, 6)


class TestShadowGram:
    """Gram matrices from shadow-estimated features."""

    def test_identity_only_spec_gives_all_ones(self, make_dataset):
        cfg = EmbeddingConfig(n=2, bandwidth=0.6)
        spec = KernelSpec(n=2, weights={PauliString("II"): 1.0})
        K = shadow_gram(make_dataset(4, 2), spec, T=20, seed=0, cfg=cfg)
        assert_allclose(K.values, np.ones((4, 4)))
        assert K.estimator == Estimator.SHADOWS
        assert K.seed == 0

    def test_close_to_exact_kernel(self, make_dataset):
        cfg = EmbeddingConfig(n=2, bandwidth=0.6)
        data = make_dataset(5, 2)
        spec = preset_weights("h-body", 2, H=1)
        estimate = shadow_gram(data, spec, T=4000, seed=9, cfg=cfg)
        assert np.max(np.abs(estimate.values - PauliKernel(spec, cfg).matrix(data))) < 0.3
        assert_allclose(estimate.values, estimate.values.T)

    def test_reproducible(self, make_dataset):
        cfg = EmbeddingConfig(n=2, bandwidth=0.6)
        data = make_dataset(3, 2)
        spec = preset_weights("h-body", 2, H=2)
        first = shadow_gram(data, spec, T=100, seed=2, cfg=cfg)
        second = shadow_gram(data, spec, T=100, seed=2, cfg=cfg)
        assert np.array_equal(first.values, second.values)

    def test_rejects_weight_above_budget(self, make_dataset):
        cfg = EmbeddingConfig(n=3, bandwidth=0.6)
        with pytest.raises(InputError):
            shadow_gram(make_dataset(2, 3), preset_weights("h-body", 3, H=3), T=10, seed=0, cfg=cfg, max_weight=2)


class TestShadowRepository:
    """Binary and JSON shadow records."""

    def test_binary_layout(self):
        shadows = collect_shadows(StateVector.basis_state(9), 7, seed=1)
        payload = ShadowRepository.to_bytes(shadows)
        assert len(payload) == 8 + 7 * (9 + 2)
        restored = ShadowRepository.from_bytes(payload)
        assert np.array_equal(restored.bases, shadows.bases)
        assert np.array_equal(restored.outcomes, shadows.outcomes)

    def test_outcome_bit_order(self):
        shadows = ShadowSet(n=2, bases=np.array([[2, 2]]), outcomes=np.array([[1, 0]]))
        assert ShadowRepository.to_bytes(shadows)[-1] == 0b01

    def test_truncated_record(self):
        payload = ShadowRepository.to_bytes(collect_shadows(StateVector.basis_state(2), 4, seed=0))
        with pytest.raises(InputError):
            ShadowRepository.from_bytes(payload[:-1])

    def test_json_record(self):
        shadows = collect_shadows(StateVector.basis_state(2), 5, seed=3)
        restored = ShadowRepository.from_json(ShadowRepository.to_json(shadows))
        assert restored.seed == 3
        assert np.array_equal(restored.outcomes, shadows.outcomes)
