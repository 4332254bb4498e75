"""Tests for the low-rank update solvers and the Newton-Riccati methods.

Oracles: kron_solve on the fully perturbed system, dense_lyap / dense Kleinman
iteration, and the closed-form scalar CARE. The second-order control problem
(q masses, n = 2q) is built inline so later structured generators can be
cross-checked against it.
"""

import numpy as np
import pytest
import scipy.sparse

from hmateq.dense import dense_lyap, dense_sylv, kron_solve
from hmateq.equations import (
    CareSolution,
    SylvesterProblem,
    newton_riccati,
    standard_newton,
    update_lyap_stable,
    update_sylv,
)
from hmateq.errors import DimensionMismatch, FirstStepFailed
from hmateq.lowrank import LowRankFactor, SymLowRank

# scalar CARE -x^2 + 2ax = c with a=-1, c=-1: roots of x^2 + 2x - 1,
# the stabilizing one (a - x*b < 0) is sqrt(2) - 1
SCALAR_CARE_ROOT = 0.4142135623730951


def rank1(rng, n, m=None, scale=1.0):
    u = rng.standard_normal((n, 1))
    v = rng.standard_normal((m or n, 1))
    fac = LowRankFactor(u, v)
    return LowRankFactor(u * (scale / fac.norm2()), v)


def laplacian_1d(n):
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def care_residual(a, b_u, c, x):
    xb = x @ b_u
    return a @ x + x @ a.T - xb @ xb.T - c


def second_order_care(q):
    """Damped mass-spring chain: n=2q CARE with singular A and full-rank C.

    C = -I: the state-weighting term enters the convention
    A X + X A^T - X B X = C with a negative sign (with +I the Kleinman
    iteration has no stabilizing fixed point to converge to).
    """
    k_mat = laplacian_1d(q)
    k_mat[0, 0] = k_mat[-1, -1] = 1.0  # free ends: all row sums vanish
    a = np.block([[np.zeros((q, q)), -0.25 * k_mat],
                  [np.eye(q), -np.eye(q)]])
    d = np.zeros((q, 2))
    d[0, 0] = d[-1, 1] = 1.0
    b_u = np.vstack([np.zeros((q, 2)), 0.25 * d])
    c = -np.eye(2 * q)
    e = 2.0 * np.vstack([np.column_stack([-d[:, 1], d[:, 0]]),
                         np.column_stack([-d[:, 1], d[:, 0]])])
    x0 = e @ e.T
    return a, b_u, c, x0


# ---------------------------------------------------------------------------
# update_sylv


def test_update_sylv_zero_perturbations():
    rng = np.random.default_rng(0)
    n, m = 7, 5
    a0 = rng.standard_normal((n, n)) - 4 * np.eye(n)
    b0 = rng.standard_normal((m, m)) + 4 * np.eye(m)
    x0 = rng.standard_normal((n, m))
    x, rep = update_sylv(a0, None, b0, None, None, None, x0, 1e-10)
    assert np.array_equal(x, x0)
    assert rep.iterations == 0 and rep.residual_est == 0.0


def test_update_sylv_matches_kron_oracle():
    rng = np.random.default_rng(1)
    n = m = 8
    a0 = rng.standard_normal((n, n)) - 4 * np.eye(n)
    b0 = rng.standard_normal((m, m)) + 4 * np.eye(m)
    c0 = rng.standard_normal((n, m))
    x0 = dense_sylv(a0, b0, c0)
    da, db, dc = rank1(rng, n), rank1(rng, m), rank1(rng, n, m)
    # default step cap targets large systems; at n=8 let the basis saturate
    x, rep = update_sylv(a0, da, b0, db, c0, dc, x0, 1e-11, tol_trunc=1e-14,
                         max_steps=10)
    x_ref = kron_solve(a0 + da.to_dense(), b0 + db.to_dense(),
                       c0 + dc.to_dense())
    assert rep.converged
    assert np.linalg.norm(x - x_ref, 2) <= 1e-9 * np.linalg.norm(x_ref, 2)
    assert rep.extras["rhs_rank"] == 3


def test_update_sylv_first_order_smallness():
    rng = np.random.default_rng(2)
    n = 24
    a0 = 0.3 * rng.standard_normal((n, n)) - 3 * np.eye(n)
    b0 = 0.3 * rng.standard_normal((n, n)) + 3 * np.eye(n)
    c0 = rng.standard_normal((n, n))
    x0 = dense_sylv(a0, b0, c0)
    da = rank1(rng, n, scale=1e-8)
    x, rep = update_sylv(a0, da, b0, None, c0, None, x0, 1e-12, tol_trunc=1e-15)
    ratio = np.linalg.norm(x - x0, 2) / np.linalg.norm(x0, 2)
    assert 1e-12 <= ratio <= 1e-6


def test_update_sylv_residual_composition():
    # true residual on the perturbed equation <= tol0 + correction budget
    rng = np.random.default_rng(3)
    n, m = 48, 32
    a0 = rng.standard_normal((n, n)) - 5 * np.eye(n)
    b0 = rng.standard_normal((m, m)) + 5 * np.eye(m)
    c0 = rng.standard_normal((n, m))
    x0 = dense_sylv(a0, b0, c0)
    noise = rng.standard_normal(x0.shape)
    x0_rough = x0 + 1e-8 * noise / np.linalg.norm(noise, 2)
    tol0 = np.linalg.norm(a0 @ x0_rough + x0_rough @ b0 - c0, 2)
    da, db, dc = rank1(rng, n), rank1(rng, m), rank1(rng, n, m)
    x, rep = update_sylv(a0, da, b0, db, c0, dc, x0_rough, 1e-9,
                         tol0=tol0, tol_trunc=1e-14)
    a_p, b_p = a0 + da.to_dense(), b0 + db.to_dense()
    res = np.linalg.norm(a_p @ x + x @ b_p - (c0 + dc.to_dense()), 2)
    assert res <= 1.05 * rep.residual_budget + 1e-12
    assert rep.residual_budget >= rep.residual_est


def test_update_sylv_none_x0_returns_correction_factor():
    rng = np.random.default_rng(4)
    n = 16
    a0 = laplacian_1d(n) + 2 * np.eye(n)
    dc = rank1(rng, n)
    dx, rep = update_sylv(a0, None, a0, None, None, dc, None, 1e-10)
    assert isinstance(dx, LowRankFactor)
    res = a0 @ dx.to_dense() + dx.to_dense() @ a0 - dc.to_dense()
    assert np.linalg.norm(res, 2) <= 1e-8 * np.linalg.norm(dx.to_dense(), 2)


def test_update_sylv_x0_shape_checked():
    a0 = np.eye(4)
    with pytest.raises(DimensionMismatch):
        update_sylv(a0, None, a0, None, None, None, np.zeros((3, 4)), 1e-8)


# ---------------------------------------------------------------------------
# update_lyap_stable


def test_update_lyap_zero_perturbation():
    rng = np.random.default_rng(5)
    n = 12
    x0 = rng.standard_normal((n, n))
    x0 = x0 + x0.T
    x, rep = update_lyap_stable(-np.eye(n), None, None, None, x0, 1e-10)
    assert np.array_equal(x, x0)
    assert rep.output_rank == 0


def test_update_lyap_matches_kron_oracle():
    rng = np.random.default_rng(6)
    n = 64
    a0 = -laplacian_1d(n)
    u = rng.standard_normal((n, 2))
    c0 = -u @ u.T
    x0 = dense_lyap(a0, c0)
    da = rank1(rng, n, scale=5e-4)  # small enough to keep A0+dA stable
    a_p = a0 + da.to_dense()
    assert np.linalg.eigvals(a_p).real.max() < 0
    w = rng.standard_normal((n, 1))
    dc = SymLowRank(w / np.linalg.norm(w), np.array([-0.3]))
    x, rep = update_lyap_stable(a0, da, c0, dc, x0, 1e-11)
    x_ref = kron_solve(a_p, a_p.T, c0 + dc.to_dense())
    assert np.linalg.norm(x - x_ref, 2) <= 1e-9 * np.linalg.norm(x_ref, 2)
    assert np.array_equal(x, x.T)


def test_update_lyap_indefinite_rhs_split_both_sides():
    # dC with both signs exercises the two sign-definite solves
    rng = np.random.default_rng(7)
    n = 48
    a0 = -laplacian_1d(n) - 0.5 * np.eye(n)
    x0 = np.zeros((n, n))
    w = np.linalg.qr(rng.standard_normal((n, 2)))[0]
    dc = SymLowRank(w, np.array([1.0, -2.0]))
    dx, rep = update_lyap_stable(a0, None, None, dc, None, 1e-10)
    assert isinstance(dx, SymLowRank)
    res = a0 @ dx.to_dense() + dx.to_dense() @ a0.T - dc.to_dense()
    assert np.linalg.norm(res, 2) <= 1e-8 * max(np.linalg.norm(dx.to_dense(), 2), 1e-30)
    assert rep.extras["rhs_rank"] == 2


# ---------------------------------------------------------------------------
# Newton-Riccati


def test_newton_scalar_riccati_both_methods():
    a = np.array([[-1.0]])
    b_u = np.array([[1.0]])
    c = np.array([[-1.0]])
    x_nr, rep_nr = newton_riccati(a, b_u, c, tol_nw=1e-12)
    x_sn, rep_sn = standard_newton(a, b_u, c, tol_nw=1e-12)
    assert abs(x_nr[0, 0] - SCALAR_CARE_ROOT) <= 1e-10
    assert abs(x_sn[0, 0] - SCALAR_CARE_ROOT) <= 1e-10
    assert rep_nr.converged and rep_sn.converged
    assert np.abs(care_residual(a, b_u, c, x_nr)).max() <= 1e-10


def test_newton_quadratic_convergence_scalar():
    a = np.array([[-1.0]])
    b_u = np.array([[1.0]])
    c = np.array([[-1.0]])
    _, rep = newton_riccati(a, b_u, c, tol_nw=1e-13, tol_inner=1e-14)
    norms = rep.extras["correction_norms"]
    drops = [norms[i + 1] <= 10 * norms[i] ** 1.7 + 1e-15
             for i in range(len(norms) - 1) if norms[i] > 1e-12]
    assert len(drops) >= 2 and all(drops)


def test_newton_x0_exact_terminates_immediately():
    rng = np.random.default_rng(8)
    n = 20
    a = -laplacian_1d(n) - np.eye(n)
    b_u = rng.standard_normal((n, 2)) * 0.5
    u = rng.standard_normal((n, 3))
    c = -u @ u.T
    x_star, _ = newton_riccati(a, b_u, c, tol_nw=1e-12)
    x, rep = newton_riccati(a, b_u, c, x0=x_star, tol_nw=1e-8)
    assert rep.extras["newton_steps"] == 1 and rep.converged
    assert np.linalg.norm(x - x_star, 2) <= 1e-7 * np.linalg.norm(x_star, 2)


def test_newton_secondorder_q16_matches_standard():
    a, b_u, c, x0 = second_order_care(16)
    assert np.linalg.eigvals(a - x0 @ (b_u @ b_u.T)).real.max() < 0
    x_nr, rep_nr = newton_riccati(a, b_u, c, x0=x0, tol_nw=1e-10,
                                  tol_inner=1e-12)
    x_sn, rep_sn = standard_newton(a, b_u, c, x0=x0, tol_nw=1e-10)
    scale = np.linalg.norm(x_sn, 2)
    assert np.linalg.norm(x_nr - x_sn, 2) <= 1e-8 * scale
    assert rep_nr.converged
    res = np.linalg.norm(care_residual(a, b_u, c, x_nr), 2)
    assert res <= 1e-8 * scale
    # closed-loop matrix must be stable at the solution
    assert np.linalg.eigvals(a - x_nr @ (b_u @ b_u.T)).real.max() < 0


def test_newton_correction_rhs_rank_is_rank_b():
    a, b_u, c, x0 = second_order_care(16)
    _, rep = newton_riccati(a, b_u, c, x0=x0, tol_nw=1e-10, tol_inner=1e-12)
    assert all(r == 2 for r in rep.extras["rhs_ranks"])


def test_newton_residual_bounded_by_report():
    a, b_u, c, x0 = second_order_care(12)
    x, rep = newton_riccati(a, b_u, c, x0=x0, tol_nw=1e-9, tol_inner=1e-11)
    res = np.linalg.norm(care_residual(a, b_u, c, x), 2)
    assert res <= 1.05 * rep.residual_budget + 1e-10


def test_newton_banded_riccati_small():
    n = 40
    a = -laplacian_1d(n)
    b_u = np.zeros((n, 2))
    b_u[0, 0] = b_u[-1, 1] = 1.0
    c = -np.eye(n)
    x_nr, rep = newton_riccati(a, b_u, c, tol_nw=1e-10, tol_inner=1e-12)
    x_sn, _ = standard_newton(a, b_u, c, tol_nw=1e-10)
    assert np.linalg.norm(x_nr - x_sn, 2) <= 1e-8 * np.linalg.norm(x_sn, 2)
    assert np.linalg.eigvalsh(x_nr).min() >= -1e-9 * np.linalg.norm(x_nr, 2)
    assert all(r == 2 for r in rep.extras["rhs_ranks"])


def test_newton_first_step_failure_wrapped():
    def broken(a, b_u, c, x0):
        raise ValueError("no solver here")

    with pytest.raises(FirstStepFailed):
        newton_riccati(-np.eye(3), np.eye(3, 1), -np.eye(3),
                       first_step_solver=broken)


def test_newton_structured_first_step_returns_care_solution():
    # a first step handing back a SymLowRank keeps the result structured
    rng = np.random.default_rng(9)
    n = 30
    a = -laplacian_1d(n) - np.eye(n)
    b_u = rng.standard_normal((n, 1)) * 0.3
    u = rng.standard_normal((n, 2))
    c = -u @ u.T

    def lowrank_first(a_, b_u_, c_, x0_):
        a_d = a_.toarray() if scipy.sparse.issparse(a_) else np.asarray(a_, dtype=float)
        x1 = dense_lyap(a_d, c_)
        lam, vec = np.linalg.eigh(x1)
        keep = np.abs(lam) > 1e-14 * np.abs(lam).max()
        return SymLowRank(vec[:, keep], lam[keep]), None

    x, rep = newton_riccati(scipy.sparse.csc_matrix(a), b_u, c,
                            first_step_solver=lowrank_first, tol_nw=1e-10)
    assert isinstance(x, CareSolution)
    x_ref, _ = standard_newton(a, b_u, c, tol_nw=1e-10)
    assert np.linalg.norm(x.to_dense() - x_ref, 2) <= 1e-8 * np.linalg.norm(x_ref, 2)


# ---------------------------------------------------------------------------
# standard_newton specifics


def test_standard_newton_monotone_loewner():
    # from X0=0 with stable A the iterates are nonincreasing after step one
    rng = np.random.default_rng(10)
    n = 48
    a = -laplacian_1d(n) - 0.5 * np.eye(n)
    b_u = rng.standard_normal((n, 2)) * 0.5
    u = rng.standard_normal((n, 4))
    c = -u @ u.T
    x, rep = standard_newton(a, b_u, c, tol_nw=1e-11, keep_iterates=True)
    its = rep.extras["iterates"]
    assert len(its) >= 3
    for xk, xk1 in zip(its[1:], its[2:]):
        assert np.linalg.eigvalsh(xk - xk1).min() >= -1e-10


def test_standard_newton_lowrank_path_matches_dense():
    rng = np.random.default_rng(11)
    n = 60
    a = -laplacian_1d(n) - 0.2 * np.eye(n)
    b_u = rng.standard_normal((n, 1)) * 0.4
    u = np.linalg.qr(rng.standard_normal((n, 2)))[0]
    c_sym = SymLowRank(u, np.array([-1.0, -0.5]))
    x_lr, rep = standard_newton(scipy.sparse.csc_matrix(a), b_u, c_sym,
                                tol_nw=1e-10, tol_inner=1e-12)
    x_d, _ = standard_newton(a, b_u, c_sym.to_dense(), tol_nw=1e-10)
    assert isinstance(x_lr, SymLowRank)
    assert np.linalg.norm(x_lr.to_dense() - x_d, 2) <= 1e-7 * np.linalg.norm(x_d, 2)


def test_standard_newton_lowrank_path_rejects_indefinite_c():
    u = np.eye(4, 1)
    with pytest.raises(ValueError):
        standard_newton(-np.eye(4), u, SymLowRank(u, np.array([1.0])))


# ---------------------------------------------------------------------------
# SylvesterProblem container


def test_sylvester_problem_validation():
    a = -np.eye(4)
    ok = SylvesterProblem(a, a.T, -np.eye(4), flavor="lyapunov-stable")
    assert ok.flavor == "lyapunov-stable"
    with pytest.raises(ValueError):
        SylvesterProblem(a, a, np.eye(4), flavor="nope")
    with pytest.raises(ValueError):
        SylvesterProblem(a, a.T, np.eye(4), flavor="lyapunov-stable")
    with pytest.raises(DimensionMismatch):
        SylvesterProblem(a, a.T, np.zeros((3, 4)))
