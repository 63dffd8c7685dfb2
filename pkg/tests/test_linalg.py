import numpy as np
import pytest

from skippath import InvalidInputError, angle, pinv, relu
from skippath.linalg import pairwise_angles, smallest_singular_ratio, unit_rows


class TestPinv:
    def test_identity(self):
        np.testing.assert_array_equal(pinv(np.eye(3)), np.eye(3))

    def test_rectangular_diagonal(self):
        W = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        expected = np.array([[1.0, 0.0], [0.0, 0.5], [0.0, 0.0]])
        np.testing.assert_allclose(pinv(W), expected, atol=1e-15)

    def test_full_row_rank_right_inverse(self, rng):
        W = rng.normal(size=(2, 5))
        assert np.linalg.norm(W @ pinv(W) - np.eye(2)) <= 1e-10

    def test_penrose_identities_random(self, rng):
        # property check over random matrices with bounded condition number
        for _ in range(30):
            r, c = rng.integers(2, 7, size=2)
            W = rng.normal(size=(r, c))
            if smallest_singular_ratio(W) < 1e-6:
                continue
            P = pinv(W)
            scale = max(1.0, np.linalg.norm(W))
            assert np.linalg.norm(W @ P @ W - W) <= 1e-8 * scale
            assert np.linalg.norm(P @ W @ P - P) <= 1e-8 * max(1.0, np.linalg.norm(P))
            assert np.linalg.norm((W @ P).T - W @ P) <= 1e-8
            assert np.linalg.norm((P @ W).T - P @ W) <= 1e-8
            if r <= c:
                assert np.linalg.norm(W @ P - np.eye(r)) <= 1e-8

    def test_rank_tolerance_zeroes_small_singular_values(self):
        W = np.diag([1.0, 1e-15])
        P = pinv(W, rank_tol=1e-12)
        np.testing.assert_allclose(P, np.diag([1.0, 0.0]))

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            pinv(np.array([[1.0, np.nan]]))

    def test_rejects_bad_tolerance(self):
        with pytest.raises(InvalidInputError):
            pinv(np.eye(2), rank_tol=0.0)


class TestAngle:
    def test_parallel(self):
        assert angle([1.0, 0.0], [1.0, 0.0]) == 0.0

    def test_orthogonal(self):
        assert angle([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.pi / 2)

    def test_forty_five_degrees(self):
        v = np.array([1.0, 1.0]) / np.sqrt(2.0)
        assert angle([1.0, 0.0], v) == pytest.approx(np.pi / 4)

    def test_symmetry_and_scale_invariance(self, rng):
        for _ in range(50):
            u = rng.normal(size=4)
            v = rng.normal(size=4)
            a, b = rng.uniform(0.1, 10.0, size=2)
            assert angle(u, v) == pytest.approx(angle(v, u), abs=1e-12)
            assert angle(a * u, b * v) == pytest.approx(angle(u, v), abs=1e-9)

    def test_zero_iff_positively_parallel(self, rng):
        u = rng.normal(size=3)
        assert angle(u, 2.5 * u) == pytest.approx(0.0, abs=1e-7)
        assert angle(u, -u) == pytest.approx(np.pi, abs=1e-7)

    def test_zero_vector_rejected(self):
        with pytest.raises(InvalidInputError):
            angle([0.0, 0.0], [1.0, 0.0])

    def test_pairwise_matches_scalar(self, rng):
        R = rng.normal(size=(8, 3))
        A = pairwise_angles(R)
        for i in range(8):
            for j in range(8):
                assert A[i, j] == pytest.approx(angle(R[i], R[j]) if i != j else 0.0,
                                                abs=1e-7)


class TestRelu:
    def test_basic(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 2.0, 0.0])),
                                      np.array([0.0, 2.0, 0.0]))

    def test_all_negative(self):
        np.testing.assert_array_equal(relu(np.array([-3.0, -0.5])), np.zeros(2))

    def test_positive_homogeneity_exact(self, rng):
        v = np.array([1.0, -1.0])
        np.testing.assert_array_equal(relu(3.0 * v), 3.0 * relu(v))
        for _ in range(20):
            t = float(rng.uniform(0.0, 5.0))
            x = rng.normal(size=6)
            np.testing.assert_array_equal(relu(t * x), t * relu(x))

    def test_matrix_input(self, rng):
        M = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(relu(M), np.maximum(M, 0.0))


def test_unit_rows_are_unit(rng):
    W = unit_rows(rng, 100, 3)
    np.testing.assert_allclose(np.linalg.norm(W, axis=1), 1.0, atol=1e-12)
