import warnings

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from hypext.errors import DimensionMismatch, IllConditionedRankDecision, InvariantMismatch
from hypext.pencil import (
    KroneckerInvariants,
    MatrixPencil,
    evaluate,
    finite_eigenvalues,
    numerical_rank,
    staircase_decompose,
    verify_invariants,
)
from hypext.symbol import constraint_at, symbol_pencil

from planted import planted_pencil, same_invariants


def diag_pencil():
    return MatrixPencil(np.eye(2), np.diag([-5.0, -7.0]))


def check_dimensions(p, inv):
    fin = sum(k for _, k in inv.finite_blocks)
    inf = sum(inv.infinite_blocks)
    eps, eta = inv.right_minimal_indices, inv.left_minimal_indices
    assert fin + inf + sum(e + 1 for e in eps) + sum(eta) == p.cols
    assert fin + inf + sum(eps) + sum(h + 1 for h in eta) == p.rows


class TestMatrixPencil:
    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            MatrixPencil(np.eye(2), np.eye(3))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            MatrixPencil(np.array([[np.nan]]), np.array([[1.0]]))

    def test_read_only(self):
        p = diag_pencil()
        with pytest.raises(ValueError):
            p.a_mat[0, 0] = 3.0


class TestEvaluate:
    def test_identity(self):
        np.testing.assert_array_equal(evaluate(MatrixPencil(np.eye(2), np.zeros((2, 2))), 3), 3 * np.eye(2))

    def test_substitution(self):
        np.testing.assert_array_equal(evaluate(diag_pencil(), 1.0), np.diag([-4.0, -6.0]))
        p = MatrixPencil(np.eye(2), np.diag([-1.0, -2.0]))
        np.testing.assert_array_equal(evaluate(p, 1.0), np.diag([0.0, -1.0]))

    def test_maxwell_light_cone(self, maxwell, frame):
        # at l = n + k with k = e_1 the pencil drops to rank 6 - 2; left kernel spanned by C.l
        k = np.array([0.0, 1.0, 0.0, 0.0])
        mat = evaluate(symbol_pencil(maxwell, frame, k), 1.0)
        s = np.linalg.svd(mat, compute_uv=False)
        assert np.sum(s > 1e-10) == 4
        cl = constraint_at(maxwell, frame.n_cov + k)
        np.testing.assert_allclose(cl @ mat, 0.0, atol=1e-14)
        assert np.linalg.matrix_rank(cl) == 2
        left = sla.null_space(mat.T)
        # the constraint covectors contracted with l span the left kernel
        np.testing.assert_allclose(left @ (left.T @ cl.T), cl.T, atol=1e-12)

    def test_rejects_infinite_lambda(self):
        with pytest.raises(ValueError):
            evaluate(diag_pencil(), np.inf)


class TestStaircaseExamples:
    def test_diagonal_regular(self):
        inv, tr = staircase_decompose(diag_pencil())
        assert list(inv.finite_blocks) == [(5.0, 1), (7.0, 1)]
        assert not inv.right_minimal_indices and not inv.left_minimal_indices
        assert not inv.infinite_blocks

    def test_single_row(self):
        inv, _ = staircase_decompose(MatrixPencil([[1.0, 0.0]], [[0.0, 1.0]]))
        assert list(inv.right_minimal_indices) == [1]
        assert not inv.finite_blocks and not inv.infinite_blocks and not inv.left_minimal_indices

    def test_maxwell(self, maxwell, frame, unit_k):
        inv, _ = staircase_decompose(symbol_pencil(maxwell, frame, unit_k))
        assert [k for _, k in inv.finite_blocks] == [1, 1, 1, 1]
        np.testing.assert_allclose([e for e, _ in inv.finite_blocks], [-1, -1, 1, 1], atol=1e-10)
        assert list(inv.left_minimal_indices) == [1, 1]
        assert inv.structure_counts() == (4, 2, 0)

    def test_mhd(self, mhd, frame, unit_k):
        inv, _ = staircase_decompose(symbol_pencil(mhd, frame, unit_k))
        np.testing.assert_allclose([e for e, _ in inv.finite_blocks], [0, 0], atol=1e-10)
        assert list(inv.left_minimal_indices) == [1]
        assert inv.structure_counts() == (2, 1, 0)

    def test_jordan_block(self):
        a = np.eye(3)
        b = -(2.0 * np.eye(3) + np.eye(3, k=1))
        inv, _ = staircase_decompose(MatrixPencil(a, b))
        assert len(inv.finite_blocks) == 1
        lam, size = inv.finite_blocks[0]
        assert size == 3 and abs(lam - 2.0) < 1e-5

    def test_transform_properties(self, maxwell, frame, unit_k):
        p = symbol_pencil(maxwell, frame, unit_k)
        inv, tr = staircase_decompose(p)
        for q in (tr.left_q, tr.right_z):
            assert np.max(np.abs(q.T @ q - np.eye(q.shape[0]))) <= 1e-12
        assert tr.pattern_residual(p) <= 1e-12
        assert tr.tol_used == 1e-10

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            staircase_decompose(diag_pencil(), tol=0.0)

    def test_ill_conditioned_flag(self):
        # a singular value within a factor 10 of the threshold tol * max(m, n) * scale
        p = MatrixPencil(np.diag([1.0, 3e-10]), np.zeros((2, 2)))
        with pytest.warns(IllConditionedRankDecision):
            inv, tr = staircase_decompose(p)
        assert tr.ill_conditioned
        check_dimensions(p, inv)

    def test_well_conditioned_is_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            _, tr = staircase_decompose(diag_pencil())
        assert not tr.ill_conditioned

    def test_complex_eigenvalues_reported(self):
        inv, _ = staircase_decompose(MatrixPencil(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]])))
        lams = [e for e, _ in inv.finite_blocks]
        np.testing.assert_allclose(lams, [-1j, 1j], atol=1e-12)

    def test_sorted_output(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p, _ = planted_pencil(rng)
            inv, _ = staircase_decompose(p)
            keys = [(round(np.real(e), 7), round(np.imag(e), 7)) for e, _ in inv.finite_blocks]
            assert keys == sorted(keys)
            for lst in (inv.infinite_blocks, inv.right_minimal_indices, inv.left_minimal_indices):
                assert list(lst) == sorted(lst)


class TestVerify:
    def test_round_trip(self):
        p = diag_pencil()
        inv, _ = staircase_decompose(p)
        rep = verify_invariants(p, inv)
        assert rep.passed and rep.max_discrepancy == 0

    def test_wrong_eigenvalue(self):
        with pytest.raises(InvariantMismatch):
            verify_invariants(diag_pencil(), KroneckerInvariants([(5.0, 1), (6.0, 1)], [], [], []))

    def test_maxwell(self, maxwell, frame, unit_k):
        p = symbol_pencil(maxwell, frame, unit_k)
        assert verify_invariants(p, staircase_decompose(p)[0]).passed

    def test_random_pencils(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            m, n = rng.integers(1, 9, size=2)
            p = MatrixPencil(rng.normal(size=(m, n)), rng.normal(size=(m, n)))
            inv, _ = staircase_decompose(p)
            check_dimensions(p, inv)
            assert verify_invariants(p, inv, seed=int(rng.integers(1 << 30))).passed


class TestFiniteEigenvalues:
    def test_diagonal(self):
        assert finite_eigenvalues(diag_pencil()) == [(5.0, 1, 1), (7.0, 1, 1)]

    def test_maxwell(self, maxwell, frame, unit_k):
        rows = finite_eigenvalues(symbol_pencil(maxwell, frame, unit_k))
        assert [(a, g) for _, a, g in rows] == [(2, 2), (2, 2)]
        np.testing.assert_allclose([lam for lam, _, _ in rows], [-1, 1], atol=1e-10)

    def test_mhd(self, mhd, frame, unit_k):
        rows = finite_eigenvalues(symbol_pencil(mhd, frame, unit_k))
        assert len(rows) == 1 and rows[0][1:] == (2, 2) and abs(rows[0][0]) < 1e-10

    def test_jordan_geometric(self):
        b = -(np.eye(2) + np.eye(2, k=1))
        assert finite_eigenvalues(MatrixPencil(np.eye(2), b))[0][1:] == (2, 1)


class TestProperties:
    def test_planted_forms(self):
        rng = np.random.default_rng(2024)
        for _ in range(300):
            p, want = planted_pencil(rng)
            got, _ = staircase_decompose(p)
            assert same_invariants(got, want), (want, got)
            check_dimensions(p, got)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p, _ = planted_pencil(rng)
            u = sla.qr(rng.normal(size=(p.rows,) * 2))[0]
            v = sla.qr(rng.normal(size=(p.cols,) * 2))[0]
            a, _ = staircase_decompose(p)
            b, _ = staircase_decompose(p.transformed(u, v))
            assert same_invariants(a, b, eig_tol=1e-10)

    def test_transpose_swaps_minimal_indices(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p, want = planted_pencil(rng)
            got, _ = staircase_decompose(p.transpose())
            assert got.right_minimal_indices == want.left_minimal_indices
            assert got.left_minimal_indices == want.right_minimal_indices
            assert got.infinite_blocks == want.infinite_blocks

    def test_maxwell_perturbation(self, maxwell, frame, unit_k):
        p = symbol_pencil(maxwell, frame, unit_k)
        ref, _ = staircase_decompose(p, tol=1e-8)
        rng = np.random.default_rng(0)
        for _ in range(20):
            q = MatrixPencil(p.a_mat + 1e-10 * rng.uniform(-1, 1, p.shape),
                             p.b_mat + 1e-10 * rng.uniform(-1, 1, p.shape))
            got, _ = staircase_decompose(q, tol=1e-8)
            assert same_invariants(got, ref, eig_tol=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8))
    def test_planted_hypothesis(self, seed, max_dim):
        p, want = planted_pencil(np.random.default_rng(seed), max_dim=max_dim)
        got, tr = staircase_decompose(p)
        assert same_invariants(got, want)
        assert tr.pattern_residual(p) <= 1e-10

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, c):
        p, _ = planted_pencil(np.random.default_rng(seed))
        a, _ = staircase_decompose(p)
        b, _ = staircase_decompose(MatrixPencil(c * p.a_mat, c * p.b_mat))
        assert same_invariants(a, b)


def test_numerical_rank_convention():
    mat = np.diag([1.0, 1e-11, 0.0])
    assert numerical_rank(mat) == 1
    assert numerical_rank(mat, tol=1e-13) == 2
