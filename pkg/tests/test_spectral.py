import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from koopstate import spectral
from koopstate.errors import ModeClosureError
from koopstate.harness import LinearDynamics, gen_linear
from koopstate.koopman import KoopmanOperator, SpectralBasis, compute_basis, fit_koopman, project, rollout
from koopstate.spectral import (
    UNSTABLE,
    close_conjugates,
    decompose,
    dominant_modes,
    eigen_coords,
    magnitude_series,
    memory_horizon,
    projection_magnitude,
    separability_residual,
    subspace_projector,
)
from koopstate.state_io import HiddenStateTensor


def identity_basis(k):
    return SpectralBasis(np.eye(k), np.ones(k))


def diag_operator(*values):
    k = len(values)
    return KoopmanOperator(np.diag(values), identity_basis(k), 0.0)


def rotation_block_operator(theta=0.1, decays=(0.5,)):
    matrix = LinearDynamics.rotation_plus_decay(theta, decays).transition
    return KoopmanOperator(matrix, identity_basis(2 + len(decays)), 0.0)


def fitted_linear_system(k=6, s=10, n=30, seed=40, radius=0.9):
    dynamics = LinearDynamics.random(k, radius, seed)
    tensor = gen_linear(dynamics, s, n, seed=seed)
    basis = compute_basis(tensor, k)
    operator = fit_koopman(tensor, basis)
    return dynamics, tensor, basis, operator


class TestDecompose:
    def test_diagonal(self):
        eigsys = decompose(diag_operator(0.9, 0.5))
        assert_allclose(eigsys.values, [0.9, 0.5], atol=1e-12)
        assert_allclose(eigsys.right_vectors, np.eye(2), atol=1e-12)
        assert_allclose(eigsys.koopman_vectors, np.eye(2), atol=1e-12)
        assert not eigsys.defective

    def test_rotation_pair(self):
        eigsys = decompose(rotation_block_operator(0.1, decays=()))
        expected = np.array([np.exp(0.1j), np.exp(-0.1j)])
        assert_allclose(eigsys.values, expected, atol=1e-12)

    def test_inverse_identity_invariant(self):
        _, _, _, operator = fitted_linear_system()
        eigsys = decompose(operator)
        product = eigsys.koopman_vectors @ eigsys.right_vectors
        assert np.max(np.abs(product - np.eye(eigsys.rank))) < 1e-6

    def test_eigen_residual_per_column(self):
        _, _, _, operator = fitted_linear_system(seed=41)
        eigsys = decompose(operator)
        for j in range(eigsys.rank):
            v = eigsys.right_vectors[:, j]
            resid = np.linalg.norm(operator.matrix @ v - eigsys.values[j] * v)
            assert resid < 1e-8 * (1 + abs(eigsys.values[j])) * np.linalg.norm(v)

    def test_phase_convention(self):
        _, _, _, operator = fitted_linear_system(seed=42)
        eigsys = decompose(operator)
        for j in range(eigsys.rank):
            col = eigsys.right_vectors[:, j]
            assert_allclose(np.linalg.norm(col), 1.0, atol=1e-12)
            lead = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
            assert lead.real > 0
            assert abs(lead.imag) < 1e-12

    def test_conjugate_closure_of_values(self):
        _, _, _, operator = fitted_linear_system(seed=43)
        eigsys = decompose(operator)
        paired = np.sort_complex(np.conj(eigsys.values))
        assert np.max(np.abs(np.sort_complex(eigsys.values) - paired)) < 1e-10


class TestEigenCoords:
    def test_identity_eigenvectors(self):
        operator = diag_operator(0.9, 0.5)
        eigsys = decompose(operator)
        states = np.random.default_rng(0).normal(size=(4, 2))
        assert_allclose(
            eigen_coords(states, operator.basis, eigsys),
            project(states, operator.basis).astype(complex),
            atol=1e-12,
        )

    def test_real_part_of_eigenvector_concentrates_on_pair(self):
        operator = rotation_block_operator(0.3, decays=(0.5,))
        eigsys = decompose(operator)
        state = eigsys.right_vectors[:, 0].real[None, :]
        coords = np.abs(eigen_coords(state, operator.basis, eigsys))[0]
        assert coords[0] > 0.1 and coords[1] > 0.1
        assert coords[2] < 1e-12

    def test_zero_state(self):
        operator = diag_operator(0.5, 0.2)
        eigsys = decompose(operator)
        coords = eigen_coords(np.zeros((1, 2)), operator.basis, eigsys)
        assert_allclose(coords, 0.0, atol=1e-15)


class TestSeparability:
    def test_linear_oracle_residual(self):
        _, tensor, basis, operator = fitted_linear_system()
        eigsys = decompose(operator)
        assert separability_residual(tensor, basis, eigsys) < 1e-8

    def test_constant_states_identity_spectrum(self):
        h_star = np.array([2.0, -1.0])
        tensor = HiddenStateTensor(np.tile(h_star, (3, 5, 1)))
        basis = compute_basis(tensor, 1)
        operator = fit_koopman(tensor, basis)
        eigsys = decompose(operator)
        assert_allclose(eigsys.values, [1.0], atol=1e-12)
        assert separability_residual(tensor, basis, eigsys) == 0.0

    def test_noisy_band(self):
        dynamics = LinearDynamics.random(5, 0.9, seed=7)
        tensor = gen_linear(dynamics, 16, 40, noise_rel=0.1, seed=7)
        basis = compute_basis(tensor, 5)
        operator = fit_koopman(tensor, basis)
        eigsys = decompose(operator)
        residual = separability_residual(tensor, basis, eigsys)
        assert 0.05 < residual < 0.5
        assert 0.0 < operator.fit_residual < 0.5


class TestMemoryHorizon:
    def test_two_decades_exact(self):
        assert memory_horizon(0.1, epsilon=1e-2) == 2.0

    def test_frozen_paper_scale_value(self):
        # log(1e-2)/log(0.9965) evaluated independently at 50-digit precision
        assert math.isclose(
            memory_horizon(0.9965, epsilon=1e-2), 1313.4589796589012, rel_tol=1e-12
        )

    def test_half_life_hand_value(self):
        assert_allclose(memory_horizon(0.5, epsilon=1e-2), 6.643856189774724)

    def test_unit_circle_infinite(self):
        assert memory_horizon(1.0) == math.inf
        assert memory_horizon(np.exp(0.3j)) == math.inf
        assert memory_horizon(1.0 - 5e-13) == math.inf

    def test_above_unit_band_unstable(self):
        assert memory_horizon(1.0 + 1e-6) == UNSTABLE
        assert memory_horizon(-2.0) == UNSTABLE

    def test_vanishing_modulus(self):
        assert memory_horizon(0.0) == 0.0
        assert memory_horizon(1e-301) == 0.0

    def test_epsilon_validation(self):
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError, match="epsilon"):
                memory_horizon(0.5, epsilon=bad)

    def test_epsilon_equals_modulus_is_one(self):
        for value in (0.3, 0.01, 0.737):
            assert memory_horizon(value, epsilon=value) == 1.0

    def test_epsilon_log_ratio_exact(self):
        for lam in (0.3, 0.77, 0.999):
            assert memory_horizon(lam, epsilon=0.25) / memory_horizon(lam, epsilon=0.5) == 2.0

    def test_monotonicity_grid(self):
        # horizons grow with |lambda| and shrink with epsilon
        moduli = np.linspace(0.05, 0.95, 20)
        epsilons = np.linspace(0.05, 0.95, 20)
        grid = np.array([[memory_horizon(m, epsilon=e) for m in moduli] for e in epsilons])
        assert np.all(np.diff(grid, axis=1) > 0), "not increasing in |lambda|"
        assert np.all(np.diff(grid, axis=0) < 0), "not decreasing in epsilon"


class TestProjectionMagnitude:
    def test_identity_first_mode(self):
        eigsys = decompose(diag_operator(0.9, 0.5))
        assert_allclose(projection_magnitude([3.0, 4.0], eigsys, 0), 3.0)
        assert_allclose(projection_magnitude([3.0, 4.0], eigsys, 1), 4.0)

    def test_orthogonal_state(self):
        eigsys = decompose(diag_operator(0.9, 0.5))
        assert projection_magnitude([0.0, 2.0], eigsys, 0) == 0.0

    def test_complex_eigenvector_hand_value(self):
        eigsys = decompose(rotation_block_operator(0.3, decays=()))
        # unit-norm rotation eigenvector: components of modulus 1/sqrt(2)
        value = projection_magnitude([1.0, 0.0], eigsys, 0)
        assert_allclose(value, 1.0 / np.sqrt(2.0), atol=1e-12)

    def test_phase_invariance(self):
        _, _, _, operator = fitted_linear_system(seed=44)
        eigsys = decompose(operator)
        coeffs = np.random.default_rng(44).normal(size=eigsys.rank)
        phase = np.exp(0.71j)
        rotated = spectral.EigenSystem(
            eigsys.values,
            eigsys.right_vectors * phase,
            eigsys.koopman_vectors / phase,
            eigsys.condition,
            eigsys.defective,
        )
        for j in range(eigsys.rank):
            assert_allclose(
                projection_magnitude(coeffs, rotated, j),
                projection_magnitude(coeffs, eigsys, j),
                atol=1e-12,
            )

    def test_index_out_of_range(self):
        eigsys = decompose(diag_operator(0.9, 0.5))
        with pytest.raises(ValueError, match="out of range"):
            projection_magnitude([1.0, 0.0], eigsys, 2)


class TestMagnitudeSeries:
    def test_single_mode_identity(self):
        operator = diag_operator(0.9, 0.5)
        eigsys = decompose(operator)
        data = np.random.default_rng(1).normal(size=(3, 4, 2))
        series = magnitude_series(HiddenStateTensor(data), operator.basis, eigsys, [0])
        assert_allclose(series, np.abs(data[:, :, 0]), atol=1e-12)

    def test_empty_mode_set(self):
        operator = diag_operator(0.9, 0.5)
        eigsys = decompose(operator)
        tensor = HiddenStateTensor(np.ones((2, 3, 2)))
        assert_allclose(magnitude_series(tensor, operator.basis, eigsys, []), 0.0)

    def test_padded_steps_emit_zero(self):
        operator = diag_operator(0.9, 0.5)
        eigsys = decompose(operator)
        mask = np.array([[True, True, False]])
        tensor = HiddenStateTensor(np.ones((1, 3, 2)), mask)
        series = magnitude_series(tensor, operator.basis, eigsys, [0, 1])
        assert series[0, 2] == 0.0
        assert np.all(series[0, :2] > 0)


class TestSubspaceProjector:
    def test_real_diagonal_single_mode(self):
        operator = diag_operator(0.9, 0.5, 0.1)
        eigsys = decompose(operator)
        projector = subspace_projector(operator.basis, eigsys, [0])
        expected = np.zeros((3, 3))
        expected[0, 0] = 1.0
        assert_allclose(projector, expected, atol=1e-12)

    def test_full_rotation_pair_spans_plane(self):
        operator = rotation_block_operator(0.2, decays=())
        eigsys = decompose(operator)
        projector = subspace_projector(operator.basis, eigsys, [0, 1])
        assert_allclose(projector, np.eye(2), atol=1e-10)

    def test_rotation_plus_decay_block(self):
        operator = rotation_block_operator(0.1, decays=(0.5,))
        eigsys = decompose(operator)
        pair = close_conjugates(eigsys.values, [0])
        projector = subspace_projector(operator.basis, eigsys, pair)
        expected = np.diag([1.0, 1.0, 0.0])
        assert_allclose(projector, expected, atol=1e-10)

    def test_full_mode_set_is_basis_projection(self):
        _, _, basis, operator = fitted_linear_system(seed=45)
        eigsys = decompose(operator)
        projector = subspace_projector(basis, eigsys, range(eigsys.rank))
        assert np.max(np.abs(projector - basis.vectors @ basis.vectors.T)) < 1e-8

    def test_closure_violation(self):
        operator = rotation_block_operator(0.2, decays=(0.5,))
        eigsys = decompose(operator)
        with pytest.raises(ModeClosureError) as excinfo:
            subspace_projector(operator.basis, eigsys, [0])
        assert excinfo.value.completed == (0, 1)

    def test_real_combine_is_idempotent(self):
        _, _, basis, operator = fitted_linear_system(seed=46)
        eigsys = decompose(operator)
        modes = close_conjugates(eigsys.values, [0, 1])
        projector = subspace_projector(basis, eigsys, modes, combine="real")
        core = np.linalg.multi_dot([basis.vectors.T, projector, basis.vectors])
        assert np.max(np.abs(core @ core - core)) < 1e-8


class TestDominantModes:
    def test_modulus_fallback(self):
        eigsys = decompose(diag_operator(0.99, 0.5, 0.1))
        assert dominant_modes(eigsys, 1) == (0,)
        assert dominant_modes(eigsys, 2) == (0, 1)

    def test_rotation_pair_closure(self):
        eigsys = decompose(rotation_block_operator(0.2, decays=(0.5,)))
        assert dominant_modes(eigsys, 1) == (0, 1)

    def test_state_based_ranking(self):
        operator = diag_operator(0.99, 0.9, 0.5)
        eigsys = decompose(operator)
        data = np.zeros((2, 4, 3))
        data[:, :, 2] = np.random.default_rng(2).normal(size=(2, 4)) + 5.0
        tensor = HiddenStateTensor(data)
        assert dominant_modes(eigsys, 1, tensor, operator.basis) == (2,)

    def test_count_validation(self):
        eigsys = decompose(diag_operator(0.9, 0.5))
        with pytest.raises(ValueError, match="count"):
            dominant_modes(eigsys, 3)


class TestEigenPowerRollout:
    def test_matches_iterated_prediction(self):
        _, tensor, basis, operator = fitted_linear_system(seed=47)
        eigsys = decompose(operator)
        assert not eigsys.defective
        start = tensor.data[:, 0, :]
        coords = eigen_coords(start, basis, eigsys)
        rolled = rollout(start, operator, 10)
        for step in range(1, 11):
            coords = coords * eigsys.values
            lifted = (coords @ eigsys.koopman_vectors).real @ basis.vectors.T
            if basis.mean is not None:
                lifted = lifted + basis.mean
            diff = np.linalg.norm(lifted - rolled[step - 1])
            assert diff < 1e-6 * max(np.linalg.norm(rolled[step - 1]), 1e-12)
