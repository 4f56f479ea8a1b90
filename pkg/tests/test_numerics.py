import numpy as np
import pytest
from numpy.testing import assert_allclose

from koopstate import numerics
from koopstate.errors import NumericsError


def random_matrix(rows, cols, seed):
    return np.random.default_rng(seed).normal(size=(rows, cols))


class TestSvd:
    def test_diagonal(self):
        result = numerics.svd(np.diag([3.0, 2.0]))
        assert_allclose(result.singular_values, [3.0, 2.0])

    def test_zero_matrix(self):
        result = numerics.svd(np.zeros((2, 2)))
        assert_allclose(result.singular_values, [0.0, 0.0])

    def test_reconstruction_seeded(self):
        m = random_matrix(6, 4, seed=0)
        left, values, right = numerics.svd(m)
        recon = left @ np.diag(values) @ right.T
        scale = max(1.0, np.max(np.abs(m)))
        assert np.max(np.abs(recon - m)) < 1e-10 * scale

    @pytest.mark.parametrize("seed,rows,cols", [(1, 5, 5), (2, 8, 3), (3, 3, 9), (4, 1, 4)])
    def test_orthonormal_blocks(self, seed, rows, cols):
        left, values, right = numerics.svd(random_matrix(rows, cols, seed))
        p = min(rows, cols)
        assert np.max(np.abs(left.T @ left - np.eye(p))) < 1e-10
        assert np.max(np.abs(right.T @ right - np.eye(p))) < 1e-10
        assert np.all(np.diff(values) <= 0)
        assert np.all(values >= 0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="non-finite"):
            numerics.svd(np.array([[1.0, np.nan]]))

    def test_rejects_1d(self):
        with pytest.raises(ValueError, match="2-D"):
            numerics.svd(np.ones(3))


class TestEig:
    def test_planar_rotation(self):
        result = numerics.eig(np.array([[0.0, -1.0], [1.0, 0.0]]))
        assert_allclose(result.values, [1j, -1j], atol=1e-12)

    def test_diagonal_modulus_order(self):
        result = numerics.eig(np.diag([2.0, 3.0]))
        assert_allclose(result.values, [3.0, 2.0])

    def test_companion_hand_roots(self):
        # roots of x^2 + 3x + 2
        result = numerics.eig(np.array([[0.0, 1.0], [-2.0, -3.0]]))
        assert_allclose(result.values, [-2.0, -1.0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_residual_bound(self, seed):
        a = random_matrix(7, 7, seed)
        values, vectors, _, _ = numerics.eig(a)
        for j in range(7):
            v = vectors[:, j]
            resid = np.linalg.norm(a @ v - values[j] * v)
            assert resid < 1e-8 * (1 + abs(values[j])) * np.linalg.norm(v)

    @pytest.mark.parametrize("seed", range(6))
    def test_conjugate_closure(self, seed):
        values = numerics.eig(random_matrix(6, 6, seed + 10)).values
        paired = np.sort_complex(np.conj(values))
        assert np.max(np.abs(np.sort_complex(values) - paired)) < 1e-10

    def test_sort_is_deterministic_ties(self):
        # conjugate pair ties on modulus: positive imaginary part first
        result = numerics.eig(np.array([[0.5, -0.3], [0.3, 0.5]]))
        assert result.values[0].imag > 0
        assert result.values[1].imag < 0

    def test_defective_flagged_not_failed(self):
        jordan = np.array([[1.0, 1.0], [0.0, 1.0]])
        with pytest.warns(RuntimeWarning, match="defective"):
            result = numerics.eig(jordan)
        assert result.defective
        assert result.condition > 1e10
        assert_allclose(result.values, [1.0, 1.0])

    def test_healthy_not_flagged(self):
        result = numerics.eig(np.diag([0.9, 0.5]))
        assert not result.defective

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError, match="square"):
            numerics.eig(np.ones((2, 3)))


class TestLstsq:
    def test_identity_design(self):
        c = numerics.lstsq(np.eye(2), np.diag([0.5, 2.0]))
        assert_allclose(c, np.diag([0.5, 2.0]), atol=1e-12)

    def test_exact_overdetermined(self):
        x = np.array([[1.0], [2.0], [3.0]])
        y = np.array([[2.0], [4.0], [6.0]])
        assert_allclose(numerics.lstsq(x, y), [[2.0]], atol=1e-12)

    def test_normal_equation_hand_value(self):
        x = np.array([[1.0], [2.0]])
        y = np.array([[1.0], [1.0]])
        assert_allclose(numerics.lstsq(x, y), [[0.6]], atol=1e-12)

    def test_minimum_norm_on_rank_deficient(self):
        # duplicate columns: infinitely many minimizers, pinv picks min-norm
        rng = np.random.default_rng(5)
        base = rng.normal(size=(10, 2))
        x = np.hstack([base, base[:, :1]])
        y = rng.normal(size=(10, 2))
        c = numerics.lstsq(x, y)
        assert_allclose(c, np.linalg.pinv(x) @ y, atol=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_local_minimum_probe(self, seed):
        rng = np.random.default_rng(seed + 100)
        x = rng.normal(size=(12, 4))
        y = rng.normal(size=(12, 3))
        c = numerics.lstsq(x, y)
        best = np.linalg.norm(x @ c - y)
        for _ in range(20):
            direction = rng.normal(size=c.shape)
            direction /= np.linalg.norm(direction)
            for sign in (1.0, -1.0):
                perturbed = np.linalg.norm(x @ (c + sign * 1e-4 * direction) - y)
                assert perturbed >= best - 1e-12

    def test_row_mismatch(self):
        with pytest.raises(ValueError, match="row mismatch"):
            numerics.lstsq(np.ones((3, 2)), np.ones((4, 2)))

    def test_empty_inputs(self):
        with pytest.raises(ValueError, match="non-empty"):
            numerics.lstsq(np.empty((0, 2)), np.empty((0, 2)))


class TestInverse:
    def test_identity(self):
        assert_allclose(numerics.inverse(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert_allclose(
            numerics.inverse(np.diag([2.0 + 0j, 4.0 + 0j])), np.diag([0.5, 0.25])
        )

    def test_seeded_residual(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)) + 5 * np.eye(5)
        inv = numerics.inverse(m)
        assert np.max(np.abs(m @ inv - np.eye(5))) < 1e-8

    def test_singular_raises_with_condition(self):
        with pytest.raises(NumericsError) as excinfo:
            numerics.inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert excinfo.value.condition is not None
        assert not np.isfinite(excinfo.value.condition) or excinfo.value.condition >= 1e12

    @pytest.mark.parametrize("seed", range(4))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed + 30)
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) + 4 * np.eye(4)
        assert np.max(np.abs(numerics.inverse(numerics.inverse(m)) - m)) < 1e-6
