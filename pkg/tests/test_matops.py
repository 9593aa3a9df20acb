import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iobs import matops
from iobs.errors import NearSingularSylvester, ShapeError
from iobs.systems import random_observable_lti, random_observable_pair

from conftest import kron_sylvester

PENDULUM_F0 = np.array([[0.0, 1.0], [-9.8, -1.0]])

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestSplit:
    def test_mixed_signs(self):
        s = matops.split_pm([[1, -2], [0, 3]])
        np.testing.assert_array_equal(s.pos, [[1, 0], [0, 3]])
        np.testing.assert_array_equal(s.neg, [[0, 2], [0, 0]])

    def test_zero(self):
        s = matops.split_pm(np.zeros((2, 3)))
        assert not s.pos.any() and not s.neg.any()

    def test_single_negative(self):
        pos, neg = matops.split_pm([[-5]])
        np.testing.assert_array_equal(pos, [[0]])
        np.testing.assert_array_equal(neg, [[5]])

    @given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
    def test_exact_reconstruction(self, M):
        s = matops.split_pm(M)
        assert np.array_equal(s.pos - s.neg, M)
        assert (s.pos >= 0).all() and (s.neg >= 0).all()
        assert np.array_equal(s.matrix, M)


class TestStructure:
    def test_metzler(self):
        assert matops.is_metzler(np.diag([-1.0, -2.0]))
        assert not matops.is_metzler(PENDULUM_F0)
        assert matops.is_metzler([[-1, 0.5], [0.2, -3]])

    def test_metzler_tolerance(self):
        M = [[-1, -1e-12], [0, -1]]
        assert not matops.is_metzler(M)
        assert matops.is_metzler(M, tol=1e-10)

    def test_nonnegative(self):
        assert matops.is_nonnegative(np.diag([0.1, 0.2]))
        assert not matops.is_nonnegative([[1.2, -0.5], [0, 0.5]])
        assert matops.is_nonnegative(np.eye(3))

    def test_hurwitz_schur(self):
        assert matops.is_hurwitz(np.diag([-1.0, -2.0]))
        assert matops.is_schur(np.diag([0.1, 0.2]))
        assert not matops.is_hurwitz([[0, 1], [-1, 0]])

    @given(st.floats(1e-3, 1e3))
    def test_positive_gain_keeps_hurwitz(self, gain):
        assert matops.is_hurwitz(gain * np.diag([-1.0, -2.0]))

    @given(st.floats(1e-6, 1.0))
    def test_gamma_keeps_schur_and_sign(self, gamma):
        A = gamma * np.diag([0.1, 0.2])
        assert matops.is_schur(A) and matops.is_nonnegative(A)

    def test_certificate_dict(self):
        cert = matops.spectral_certificate(np.diag([-1.0, -2.0]))
        d = cert.as_dict()
        assert d["is_metzler"] and d["max_real_part"] == -1.0


class TestRank:
    def test_controllable(self):
        assert matops.is_controllable(np.diag([-1.0, -2.0]), [[1], [1]])
        assert not matops.is_controllable(np.diag([-1.0, -1.0]), [[1], [1]])
        assert matops.is_controllable([[0, 1], [0, 0]], [[0], [1]])

    def test_observable(self):
        assert matops.is_observable(PENDULUM_F0, [[1, 0]])
        assert not matops.is_observable(np.diag([1.0, 2.0]), [[1, 0]])
        assert matops.is_observable(np.eye(2), np.eye(2))

    def test_duality(self):
        rng = np.random.default_rng(5)
        F, H = random_observable_pair(rng, 4, 1)
        assert matops.is_controllable(F.T, H.T)


class TestSpectra:
    def test_disjoint(self):
        assert matops.spectra_disjoint(np.diag([-1.0, -2.0]), [[0, 1], [-1, 0]])
        assert not matops.spectra_disjoint(np.diag([-1.0, -2.0]), np.diag([-1.0, 5.0]))

    def test_pendulum_gap(self):
        A = 2 * np.diag([-1.0, -2.0])
        eig_f = np.linalg.eigvals(PENDULUM_F0)
        gap = np.min(np.abs(np.array([-2.0, -4.0])[:, None] - eig_f[None, :]))
        assert gap > 1.0
        assert matops.spectra_disjoint(A, PENDULUM_F0)
        assert matops.spectral_gap(A, PENDULUM_F0) == pytest.approx(gap)


class TestSylvester:
    def test_scalar(self):
        # T * 1 = -T + 1
        T = matops.solve_sylvester([[-1]], [[1]], [[1]])
        assert T[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_pendulum_against_kronecker(self):
        A = np.diag([-1.0, -2.0])
        F = np.array([[0.0, 1.0], [-1.0, 0.0]])
        C = np.array([[1.0], [1.0]]) @ np.array([[1.0, 0.0]])
        T = matops.solve_sylvester(A, F, C)
        np.testing.assert_allclose(T, kron_sylvester(A, F, C), rtol=1e-10, atol=1e-14)

    def test_example1_residual(self):
        F, H, _, _ = random_observable_lti(3)
        A = np.diag(-np.arange(3.0, 11.0))
        B = np.random.default_rng(0).standard_normal((8, 6))
        T = matops.solve_sylvester(A, F, B @ H)
        assert matops.sylvester_residual(T, A, F, B @ H) < 1e-10

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_matches_kronecker(self, n_x, n_z, seed):
        rng = np.random.default_rng(seed)
        A = -np.diag(rng.uniform(1, 5, n_z)) + 0.1 * rng.standard_normal((n_z, n_z))
        F = rng.standard_normal((n_x, n_x))
        C = rng.standard_normal((n_z, n_x))
        if matops.spectral_gap(A, F) < 1e-2:
            return
        T = matops.solve_sylvester(A, F, C)
        ref = kron_sylvester(A, F, C)
        assert np.max(np.abs(T - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))

    def test_overlap_raises(self):
        with pytest.raises(NearSingularSylvester):
            matops.solve_sylvester(np.diag([-1.0, -2.0]), np.diag([-1.0, 3.0]), np.ones((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matops.solve_sylvester(np.eye(2) * -1, np.eye(3), np.ones((3, 2)))


class TestPinv:
    def test_inverse(self):
        M = np.array([[2.0, 1.0], [1.0, 3.0]])
        assert np.linalg.norm(matops.pinv(M) @ M - np.eye(2)) < 1e-12

    def test_left_inverse(self):
        T = np.random.default_rng(1).standard_normal((5, 3))
        np.testing.assert_allclose(matops.pinv(T) @ T, np.eye(3), atol=1e-10)

    def test_zero(self):
        np.testing.assert_array_equal(matops.pinv(np.zeros((2, 3))), np.zeros((3, 2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 6), st.integers(0, 2**32 - 1))
    def test_penrose_identities(self, m, n, rank, seed):
        rng = np.random.default_rng(seed)
        r = min(rank, m, n)
        M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        P = matops.pinv(M)
        scale = max(1.0, np.linalg.norm(M)) * max(1.0, np.linalg.norm(P))
        tol = 1e-10 * scale**2
        assert np.linalg.norm(M @ P @ M - M) <= tol
        assert np.linalg.norm(P @ M @ P - P) <= tol
        assert np.linalg.norm((M @ P).T - M @ P) <= tol
        assert np.linalg.norm((P @ M).T - P @ M) <= tol


class TestSingularValues:
    def test_identity(self):
        assert matops.min_singular_value(np.eye(3)) == pytest.approx(1.0)

    def test_rank_deficient(self):
        assert matops.min_singular_value(np.diag([3.0, 0.0])) == 0.0

    def test_wide_matrix_is_not_left_invertible(self):
        assert matops.min_singular_value(np.ones((1, 3))) == 0.0

    def test_example3_transform_at_k2(self):
        from iobs.ltv_dt import t_step

        A, B, H = np.diag([0.1, 0.2]), np.ones((2, 1)), np.array([[1.0, 0.0]])
        T = np.zeros((2, 2))
        for k in range(2):
            F = np.array([[1.2, -1 + 0.5 * np.cos(k)], [0, 0.5 + 0.2 * np.sin(k)]])
            T = t_step(T, F, H, A, B)
        assert matops.min_singular_value(T) > 1e-3
