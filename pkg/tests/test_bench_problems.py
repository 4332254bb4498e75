"""Generator oracles for the benchmark problem families.

Expected matrices are rebuilt inline from the published formulas with plain
dense numpy (np.kron for the two-scale heat model) and compared exactly
against the sparse generator output. Solver-facing claims (definiteness,
formatted ranks, Newton agreement with the dense oracle) run on small
instances; large-size behavior belongs to the acceptance suite.
"""

import math

import numpy as np
import pytest

from hmateq.bench.problems import (
    CareProblem,
    ToleranceProfile,
    default_profile,
    gen_convdiff,
    gen_heat,
    gen_laplace2d,
    gen_riccati_banded,
    gen_second_order_shuffle,
)
from hmateq.equations import SylvesterProblem, newton_riccati, standard_newton
from hmateq.hodlr import hodlr_from_banded, hodlr_from_dense, tree_build
from hmateq.hss import HssMatrix, hss_compress


def trid(n, lo, di, up):
    return lo * np.eye(n, k=-1) + di * np.eye(n) + up * np.eye(n, k=1)


class TestProfiles:
    def test_per_problem_defaults(self):
        assert default_profile("laplace2d") == ToleranceProfile(1e-8, 1e-12, 256, 1e-12)
        assert default_profile("convdiff") == default_profile("laplace2d")
        assert default_profile("heat") == ToleranceProfile(1e-8, 1e-6, 256, 1e-6)
        assert default_profile("riccati_banded") == ToleranceProfile(1e-8, 1e-12, 256, 1e-12)
        assert default_profile("second_order_shuffle") == default_profile("riccati_banded")
        assert default_profile("from_files").tol_ek == 1e-8

    def test_unknown_problem_rejected(self):
        with pytest.raises(ValueError):
            default_profile("poisson3d")

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            ToleranceProfile(tol_ek=0.0)
        with pytest.raises(ValueError):
            ToleranceProfile(leaf=1)


class TestLaplace2d:
    def test_matrix_entries_exact(self):
        p = gen_laplace2d(4)
        assert isinstance(p, SylvesterProblem)
        a = p.a.toarray()
        np.testing.assert_array_equal(a, 25.0 * trid(4, -1.0, 2.0, -1.0))
        np.testing.assert_array_equal(p.b.toarray(), a.T)

    def test_kernel_samples_on_interior_grid(self):
        c = gen_laplace2d(4).c
        assert isinstance(c, np.ndarray)
        # f(x, x) = log 1 = 0 on the diagonal, exactly
        np.testing.assert_array_equal(np.diag(c), np.zeros(4))
        # grid points i/(n+1): independent scalar evaluations
        assert c[0, 1] == pytest.approx(math.log(1.2), abs=1e-15)
        assert c[0, 3] == pytest.approx(math.log(1.6), abs=1e-15)
        np.testing.assert_array_equal(c, c.T)

    def test_kernel_compresses_to_small_hodlr_rank(self):
        c = gen_laplace2d(64).c
        h = hodlr_from_dense(c, tree_build(64, 16), 1e-12)
        assert h.rank() <= 10

    def test_size_guards(self):
        with pytest.raises(ValueError):
            gen_laplace2d(3)
        # dense kernel assembly is deliberately capped
        with pytest.raises(ValueError):
            gen_laplace2d(8193)


class TestConvdiff:
    def test_matrix_matches_display(self):
        a = gen_convdiff(5).a.toarray()
        expected = 36.0 * trid(5, -1.0, 2.0, -1.0) + 15.0 * (
            trid(5, 1.0, 3.0, -5.0) + np.eye(5, k=2))
        np.testing.assert_array_equal(a, expected)

    def test_nonsymmetric_narrow_band(self):
        a = gen_convdiff(64).a
        assert abs(a - a.T).max() > 0
        coo = a.tocoo()
        assert np.abs(coo.row - coo.col).max() == 2

    def test_hss_rank_of_band(self):
        a = gen_convdiff(64).a
        h = hss_compress(hodlr_from_banded(a, tree_build(64, 16)), tol_rel=1e-14)
        assert h.rank() <= 4

    def test_same_kernel_rhs_as_laplace2d(self):
        np.testing.assert_array_equal(gen_convdiff(16).c, gen_laplace2d(16).c)


class TestHeat:
    def test_small_instance_matches_kron_formula(self):
        p = gen_heat(2)
        a_, b_, c_, d_ = -1.36, 0.34, 0.2, 0.1
        e6 = np.ones((6, 6))
        a_ref = np.kron(np.eye(2), trid(6, b_, a_, b_)) + np.kron(
            trid(2, b_, 0.0, b_), np.eye(6))
        c_ref = np.kron(np.eye(2), -c_ * e6 + (c_ - 1.0) * np.eye(6)) + np.kron(
            trid(2, d_, 0.0, d_), e6)
        np.testing.assert_array_equal(p.a.toarray(), a_ref)
        np.testing.assert_array_equal(p.c.toarray(), c_ref)

    def test_bandwidths(self):
        p = gen_heat(3)
        ca, cc = p.a.tocoo(), p.c.tocoo()
        assert np.abs(ca.row - ca.col).max() == 6
        assert np.abs(cc.row - cc.col).max() == 11

    def test_symmetric(self):
        p = gen_heat(5)
        assert abs(p.a - p.a.T).max() == 0
        assert abs(p.c - p.c.T).max() == 0

    def test_condition_number_bounded_at_q256(self):
        lam = np.linalg.eigvalsh(gen_heat(256).a.toarray())
        assert lam.max() < 0  # negative definite
        assert abs(lam).max() / abs(lam).min() <= 40.0

    def test_size_guard(self):
        with pytest.raises(ValueError):
            gen_heat(1)


class TestRiccatiBanded:
    def test_coefficients_exact(self):
        p = gen_riccati_banded(6)
        assert isinstance(p, CareProblem)
        np.testing.assert_array_equal(p.a.toarray(), trid(6, 1.0, -2.0, 1.0))
        b_ref = np.zeros((6, 2))
        b_ref[0, 0] = b_ref[-1, 1] = 1.0
        np.testing.assert_array_equal(p.b_u, b_ref)
        np.testing.assert_array_equal(p.c.toarray(), -np.eye(6))
        assert p.x0 is None

    def test_a_negative_definite(self):
        lam = np.linalg.eigvalsh(gen_riccati_banded(64).a.toarray())
        assert lam.max() < 0

    def test_b_rank_two(self):
        p = gen_riccati_banded(32)
        assert np.linalg.matrix_rank(p.b_u) == 2

    def test_newton_matches_dense_oracle_n32(self):
        p = gen_riccati_banded(32)
        a_d, c_d = p.a.toarray(), p.c.toarray()
        x, rep = newton_riccati(a_d, p.b_u, c_d, tol_nw=1e-10)
        x_ref, _ = standard_newton(a_d, p.b_u, c_d, tol_nw=1e-12)
        assert rep.converged
        assert np.linalg.norm(x - x_ref, 2) <= 1e-7 * np.linalg.norm(x_ref, 2)


class TestSecondOrderShuffle:
    def unshuffled_dense(self, q):
        k = trid(q, -1.0, 2.0, -1.0)
        k[0, 0] = k[-1, -1] = 1.0
        a = np.block([[np.zeros((q, q)), -0.25 * k],
                      [np.eye(q), -np.eye(q)]])
        d = np.zeros((q, 2))
        d[0, 0] = d[-1, 1] = 1.0
        b_u = np.vstack([np.zeros((q, 2)), 0.25 * d])
        e = 2.0 * np.vstack([np.column_stack([-d[:, 1], d[:, 0]])] * 2)
        return a, b_u, -np.eye(2 * q), e @ e.T

    def test_shuffled_pieces_match_dense_construction(self):
        q = 8
        p = gen_second_order_shuffle(q, leaf=8)
        a, b_u, c, x0 = self.unshuffled_dense(q)
        perm = p.shuffle.perm
        assert isinstance(p.a, HssMatrix)
        np.testing.assert_allclose(p.a.to_dense(), a[np.ix_(perm, perm)], atol=1e-13)
        np.testing.assert_array_equal(p.a_sparse.toarray(), a[np.ix_(perm, perm)])
        np.testing.assert_array_equal(p.b_u, b_u[perm])
        np.testing.assert_array_equal(p.c.toarray(), c)
        np.testing.assert_allclose(p.x0.to_dense(), x0[np.ix_(perm, perm)], atol=1e-14)

    def test_path_laplacian_structure(self):
        q = 12
        p = gen_second_order_shuffle(q, leaf=8)
        inv = p.shuffle.inverse().perm
        a = p.a_sparse.toarray()[np.ix_(inv, inv)]
        k = -4.0 * a[:q, q:]
        # free-end graph Laplacian: every row sums to zero, unit corners
        np.testing.assert_allclose(k.sum(axis=1), np.zeros(q), atol=1e-14)
        assert k[0, 0] == k[-1, -1] == 1.0
        assert k[1, 1] == 2.0

    def test_companion_hss_rank_at_scale(self):
        p = gen_second_order_shuffle(512)
        assert p.a.rank() <= 2
        assert p.a.n == 1024

    def test_initial_guess_is_stabilizing(self):
        q = 16
        p = gen_second_order_shuffle(q, leaf=8)
        a = p.a_sparse.toarray()
        closed = a - p.x0.to_dense() @ (p.b_u @ p.b_u.T)
        assert np.linalg.eigvals(closed).real.max() < 0

    def test_newton_matches_unshuffled_dense_oracle_q16(self):
        q = 16
        p = gen_second_order_shuffle(q, leaf=8)
        a, b_u, c, x0 = self.unshuffled_dense(q)
        x_ref, _ = standard_newton(a, b_u, c, x0=x0, tol_nw=1e-11)
        x_sh, rep = newton_riccati(p.a_sparse, p.b_u, p.c.toarray(),
                                   x0=p.x0.to_dense(), tol_nw=1e-10)
        assert rep.converged
        inv = p.shuffle.inverse().perm
        back = x_sh[np.ix_(inv, inv)]
        assert np.linalg.norm(back - x_ref, 2) <= 1e-7 * np.linalg.norm(x_ref, 2)

    def test_size_guard(self):
        with pytest.raises(ValueError):
            gen_second_order_shuffle(1)
