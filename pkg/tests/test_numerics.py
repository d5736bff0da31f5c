import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from projreg.numerics import (
    BadRankError,
    NotFiniteError,
    NotSymmetricError,
    eig_sym,
    projector_onto_columns,
    pseudo_inverse,
    rank_k_approx,
    svd,
)


def random_matrix(rng, n, p, scale=1.0):
    return rng.standard_normal((n, p)) * scale


class TestEigSym:
    def test_diagonal_sorted_descending(self):
        dec = eig_sym(np.diag([3.0, 1.0, 2.0]))
        assert_allclose(dec.eigenvalues, [3.0, 2.0, 1.0])
        # axis eigenvectors, up to sign
        assert_allclose(np.abs(dec.eigenvectors), np.eye(3)[:, [0, 2, 1]], atol=1e-14)

    def test_identity(self):
        dec = eig_sym(np.eye(4))
        assert_allclose(dec.eigenvalues, np.ones(4))

    def test_reconstruction_random_gram(self):
        rng = np.random.default_rng(0)
        w = random_matrix(rng, 5, 5)
        m = w @ w.T
        dec = eig_sym(m)
        assert np.max(np.abs(dec.reconstruct() - m)) < 1e-10
        assert_allclose(dec.eigenvectors.T @ dec.eigenvectors, np.eye(5), atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(NotSymmetricError):
            eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_nonfinite(self):
        with pytest.raises(NotFiniteError):
            eig_sym(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestPseudoInverse:
    def test_diagonal(self):
        assert_allclose(pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))

    def test_matches_solve_inverse(self):
        rng = np.random.default_rng(1)
        m = random_matrix(rng, 3, 3) + 3 * np.eye(3)
        assert_allclose(pseudo_inverse(m), np.linalg.solve(m, np.eye(3)), atol=1e-10)

    def test_rank_one_closed_form(self):
        rng = np.random.default_rng(2)
        u = rng.standard_normal(5)
        u /= np.linalg.norm(u)
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        assert_allclose(pseudo_inverse(np.outer(u, v)), np.outer(v, u), atol=1e-12)

    def test_rank_tol_range(self):
        with pytest.raises(ValueError):
            pseudo_inverse(np.eye(2), rank_tol=1.5)

    def test_rank_tol_truncates(self):
        m = np.diag([1.0, 1e-15])
        p = pseudo_inverse(m, rank_tol=1e-12)
        assert p[1, 1] == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31))
    def test_moore_penrose_identities(self, n, p, seed):
        m = np.random.default_rng(seed).standard_normal((n, p))
        mp = pseudo_inverse(m)
        scale = max(np.linalg.norm(m), 1.0)
        assert np.linalg.norm(m @ mp @ m - m) <= 1e-8 * scale
        assert np.linalg.norm(mp @ m @ mp - mp) <= 1e-8 * max(np.linalg.norm(mp), 1.0)
        assert np.linalg.norm((m @ mp) - (m @ mp).T) <= 1e-8
        assert np.linalg.norm((mp @ m) - (mp @ m).T) <= 1e-8


class TestRankKApprox:
    def test_full_rank_identity(self):
        rng = np.random.default_rng(3)
        m = random_matrix(rng, 4, 6)
        assert_allclose(rank_k_approx(m, 4), m, atol=1e-10)

    def test_diagonal_truncation(self):
        assert_allclose(rank_k_approx(np.diag([3.0, 2.0, 1.0]), 2),
                        np.diag([3.0, 2.0, 0.0]), atol=1e-12)

    def test_frobenius_error_is_tail_energy(self):
        rng = np.random.default_rng(4)
        m = random_matrix(rng, 6, 4)
        s = np.linalg.svd(m, compute_uv=False)
        err = np.linalg.norm(m - rank_k_approx(m, 2))
        assert_allclose(err, np.sqrt(s[2] ** 2 + s[3] ** 2), rtol=1e-10)

    @pytest.mark.parametrize("k", [0, 5])
    def test_bad_rank(self, k):
        with pytest.raises(BadRankError):
            rank_k_approx(np.eye(4), k)


class TestProjector:
    def test_single_basis_vector(self):
        e1 = np.zeros((3, 1))
        e1[0, 0] = 1.0
        assert_allclose(projector_onto_columns(e1), np.diag([1.0, 0.0, 0.0]), atol=1e-14)

    def test_full_column_rank_square(self):
        rng = np.random.default_rng(5)
        m = random_matrix(rng, 4, 4) + 2 * np.eye(4)
        assert_allclose(projector_onto_columns(m), np.eye(4), atol=1e-10)

    def test_idempotent_symmetric_and_reproducing(self):
        rng = np.random.default_rng(6)
        m = random_matrix(rng, 5, 2)
        p = projector_onto_columns(m)
        assert np.max(np.abs(p @ p - p)) < 1e-10
        assert np.max(np.abs(p - p.T)) < 1e-10
        assert np.max(np.abs(p @ m - m)) < 1e-8
        assert_allclose(np.trace(p), np.linalg.matrix_rank(m), atol=1e-8)

    def test_eigenvalues_zero_or_one(self):
        rng = np.random.default_rng(7)
        m = random_matrix(rng, 6, 3)
        lam = np.linalg.eigvalsh(projector_onto_columns(m))
        assert np.all((np.abs(lam) < 1e-8) | (np.abs(lam - 1.0) < 1e-8))

    def test_zero_matrix_rejected(self):
        with pytest.raises(ValueError):
            projector_onto_columns(np.zeros((3, 2)))


class TestSvd:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    def test_reconstruction(self, n, p, seed):
        m = np.random.default_rng(seed).standard_normal((n, p))
        dec = svd(m)
        err = np.linalg.norm((dec.u * dec.s) @ dec.vt - m)
        assert err <= 1e-9 * max(np.linalg.norm(m), 1.0)
        assert np.all(np.diff(dec.s) <= 1e-12)
        assert np.all(dec.s >= 0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**31),
           st.data())
    def test_singular_value_interlacing_on_column_subsets(self, n, p, seed, data):
        m = np.random.default_rng(seed).standard_normal((n, p))
        size = data.draw(st.integers(1, p))
        cols = data.draw(
            st.lists(st.integers(0, p - 1), min_size=size, max_size=size, unique=True)
        )
        s_full = np.linalg.svd(m, compute_uv=False)
        s_sub = np.linalg.svd(m[:, cols], compute_uv=False)
        assert np.all(s_sub <= s_full[: s_sub.size] + 1e-10)
