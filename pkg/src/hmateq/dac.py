"""Divide-and-conquer solvers for Sylvester and Lyapunov equations with
HODLR or HSS coefficients.

Each coefficient splits along its cluster tree as
A = blkdiag(A11, A22) + dA with dA of low rank. The equation restricted to
the diagonal blocks is solved recursively, and the remainder

    A dX + dX B = dC - dA X0 - X0 dB

is a Sylvester equation with low-rank right-hand side, handled by the
extended Krylov solver with operator handles factored once per node.
Corrections are folded into the block-diagonal base solution in formatted
arithmetic. The Lyapunov path splits the indefinite correction right-hand
side into two sign-definite solves and keeps every returned matrix exactly
symmetric; the Hermitian-split path halves the perturbation rank when -A is
positive definite in HSS form.
"""

import time
from dataclasses import dataclass

import numpy as np

from .dense import dense_lyap, dense_sylv, two_norm_estimate
from .errors import LeafSolveFailure, TreeMismatch
from .hodlr import (
    ClusterTree,
    HodlrMatrix,
    hodlr_axpy_lowrank,
    hodlr_blkdiag,
    hodlr_lu_solve,
    hodlr_split,
    hodlr_sym_axpy,
)
from .hss import (
    HssMatrix,
    hss_axpy_lowrank,
    hss_axpy_sandwich,
    hss_blkdiag,
    hss_hermitian_split,
    hss_scale,
    hss_split,
    rhs_theta_split,
)
from .krylov import (
    low_rank_lyap,
    low_rank_sylv,
    operator_from_dense,
    operator_from_sparse,
    woodbury_handle,
)
from .lowrank import (
    LowRankFactor,
    SymLowRank,
    assemble_rhs,
    compress,
    split_indefinite,
    sym_compress,
)
from .report import SolveReport


@dataclass(frozen=True)
class DacConfig:
    """Parameters of the divide-and-conquer recursion.

    tol_krylov drives the extended Krylov correction solves and tol_trunc
    every formatted truncation. Subproblems of size at most leaf_size (and
    format leaves, always) are materialized and solved densely.
    compress_solution None picks the format default: off for HODLR, where
    recompressing the sum X0 + dX is the dominant cost, on for HSS, whose
    solve complexity relies on bounded ranks.
    """

    tol_krylov: float = 1e-8
    tol_trunc: float = 1e-10
    leaf_size: int = 256
    compress_solution: bool = None
    format: str = "hodlr"

    def __post_init__(self):
        if not (self.tol_krylov > 0.0 and self.tol_trunc > 0.0):
            raise ValueError("tolerances must be positive")
        if self.leaf_size < 2:
            raise ValueError("leaf_size must be at least 2")
        if self.format not in ("hodlr", "hss"):
            raise ValueError(f"unknown format {self.format!r}")

    @property
    def compress(self):
        if self.compress_solution is None:
            return self.format == "hss"
        return self.compress_solution


class _Shadow:
    """Optional sparse + low-rank mirror of a structured coefficient.

    The structured matrix must equal sparse + lowrank; the mirror only
    supplies fast factorizations for the correction operator handles.
    Without one, HODLR nodes are LU-factored in formatted arithmetic and
    anything else falls back to a dense factorization.
    """

    __slots__ = ("sparse", "lowrank")

    def __init__(self, sparse=None, lowrank=None):
        self.sparse = sparse
        self.lowrank = lowrank

    def restrict(self, lo, hi):
        sp = self.sparse[lo:hi, lo:hi] if self.sparse is not None else None
        lr = (LowRankFactor(self.lowrank.left[lo:hi], self.lowrank.right[lo:hi])
              if self.lowrank is not None else None)
        return _Shadow(sp, lr)

    def augmented(self, extra_left, extra_right):
        """Shadow of this matrix plus extra_left @ extra_right^T."""
        if self.sparse is None:
            return self  # structured fallback already sees the full matrix
        if self.lowrank is None:
            lr = LowRankFactor(extra_left, extra_right)
        else:
            lr = LowRankFactor(np.hstack([self.lowrank.left, extra_left]),
                               np.hstack([self.lowrank.right, extra_right]))
        return _Shadow(self.sparse, lr)

    def handle(self, mat):
        if self.sparse is not None:
            base = operator_from_sparse(self.sparse)
            if self.lowrank is not None and self.lowrank.rank:
                return woodbury_handle(base, self.lowrank.left,
                                       self.lowrank.right)
            return base
        if isinstance(mat, HodlrMatrix):
            return hodlr_lu_solve(mat)
        return operator_from_dense(mat.to_dense())


def _shadow(sparse, lowrank):
    return _Shadow(sparse.tocsr() if sparse is not None else None, lowrank)


class _State:
    __slots__ = ("budget_abs", "iters", "flags", "compressions",
                 "leaf_solves", "corrections", "coeff_scale")

    def __init__(self, coeff_scale=1.0):
        self.budget_abs = 0.0
        self.iters = 0
        self.flags = []
        self.compressions = 0
        self.leaf_solves = 0
        self.corrections = 0
        # ||A|| + ||B|| of the full equation; correction solves at every node
        # stop relative to this scale, matching the residual normalization
        self.coeff_scale = coeff_scale

    def absorb(self, rep):
        self.budget_abs += rep.residual_budget
        self.iters += rep.iterations
        self.corrections += 1
        for f in rep.flags:
            if f not in self.flags:
                self.flags.append(f)


def _check_inputs(mats, cfg):
    want = HssMatrix if cfg.format == "hss" else HodlrMatrix
    ref = mats[0][0]
    for mat, name in mats:
        if not isinstance(mat, want):
            raise ValueError(f"{name} is not a {cfg.format.upper()} matrix")
        if not mat.tree.compatible(ref.tree):
            raise TreeMismatch(f"{name} is partitioned differently from A")


def _split(mat):
    return hss_split(mat) if isinstance(mat, HssMatrix) else hodlr_split(mat)


def _leaf_matrix(xd, fmt):
    tree = ClusterTree(xd.shape[0])
    if fmt == "hss":
        empty = np.zeros((xd.shape[0], 0))
        return HssMatrix(tree, d=xd, u=empty, v=empty)
    return HodlrMatrix(tree, d=xd)


def _blkdiag(x1, x2, fmt):
    return hss_blkdiag(x1, x2) if fmt == "hss" else hodlr_blkdiag(x1, x2)


def _is_recursion_leaf(mats, cfg):
    return any(m.is_leaf for m in mats) or mats[0].n <= cfg.leaf_size


def _leaf_solve(solver, args, state, fmt):
    try:
        xd = solver(*args)
    except Exception as exc:
        n = args[0].shape[0]
        raise LeafSolveFailure(
            f"dense solve failed on a {n} x {n} leaf: {exc}") from exc
    state.leaf_solves += 1
    return _leaf_matrix(xd, fmt)


def _sym_part(u, v):
    """Eigen-factored symmetric part (u v^T + v u^T) / 2."""
    n, k = u.shape
    if k == 0:
        return SymLowRank.zero(n)
    q, r = np.linalg.qr(np.hstack([u, v]))
    core = np.zeros((2 * k, 2 * k))
    core[:k, k:] = np.eye(k) / 2.0
    core[k:, :k] = np.eye(k) / 2.0
    lam, vec = np.linalg.eigh(r @ core @ r.T)
    top = np.abs(lam).max(initial=0.0)
    if top == 0.0:
        return SymLowRank.zero(n)
    keep = np.abs(lam) > 1e-14 * top
    return SymLowRank(q @ vec[:, keep], lam[keep])


def _sym_update(x0, dx, cfg, state):
    """X0 + dX for SymLowRank dX, preserving exact symmetry per format."""
    tol = cfg.tol_trunc if cfg.compress else 0.0
    if cfg.compress and dx.rank:
        state.compressions += 1
    if cfg.format == "hss":
        x = x0
        if dx.rank:
            x = hss_axpy_sandwich(x0, dx.basis, np.diag(dx.core), dx.basis,
                                  tol)
        x.symmetric = True
        return x
    return hodlr_sym_axpy(x0, dx, tol)


def _lyap_correction(handle, u_a, v_a, dc_sym, x0, cfg, state, n):
    """Indefinite correction RHS split into two sign-definite solves."""
    u1, u2 = split_indefinite(u_a, v_a, dc_sym.basis, dc_sym.core, x0,
                              tol_rel=cfg.tol_trunc)
    state.compressions += 1
    parts = []
    for u_i, orient in ((u2, 1.0), (u1, -1.0)):
        if u_i.shape[1] == 0:
            continue
        dx_i, rep_i = low_rank_lyap(handle, u_i, -1, cfg.tol_krylov,
                                    max_steps=n, tol_trunc=cfg.tol_trunc,
                                    res_scale=state.coeff_scale)
        state.absorb(rep_i)
        if dx_i.rank:
            parts.append((dx_i, orient))
    if not parts:
        return SymLowRank.zero(n)
    basis = np.hstack([p.basis for p, _ in parts])
    core = np.concatenate([o * p.core for p, o in parts])
    # 1e-14 pass only removes exact overlap between the two solves
    return sym_compress(SymLowRank(basis, core), 1e-14)


def _sylv_node(a, b, c, cfg, sh_a, sh_b, state):
    n = a.n
    if _is_recursion_leaf((a, b, c), cfg):
        return _leaf_solve(dense_sylv, (a.to_dense(), b.to_dense(),
                                        c.to_dense()), state, cfg.format)

    a11, a22, ua, va = _split(a)
    b11, b22, ub, vb = _split(b)
    c11, c22, uc, vc = _split(c)
    n1 = a11.n
    if b11.n != n1 or c11.n != n1:
        raise TreeMismatch("coefficient trees split at different points")

    x1 = _sylv_node(a11, b11, c11, cfg, sh_a.restrict(0, n1),
                    sh_b.restrict(0, n1), state)
    x2 = _sylv_node(a22, b22, c22, cfg, sh_a.restrict(n1, n),
                    sh_b.restrict(n1, n), state)
    x0 = _blkdiag(x1, x2, cfg.format)

    rhs = assemble_rhs(LowRankFactor(ua, va), LowRankFactor(ub, vb),
                       LowRankFactor(uc, vc), x0, n, n)
    rhs = compress(rhs, cfg.tol_trunc)  # always recompress before the solve
    state.compressions += 1
    if rhs.rank == 0:
        return x0

    dx, rep = low_rank_sylv(sh_a.handle(a), sh_b.handle(b),
                            rhs.left, rhs.right, cfg.tol_krylov,
                            max_steps=n, tol_trunc=cfg.tol_trunc,
                            res_scale=state.coeff_scale)
    state.absorb(rep)
    tol = cfg.tol_trunc if cfg.compress else 0.0
    if cfg.compress:
        state.compressions += 1
    if cfg.format == "hss":
        return hss_axpy_lowrank(x0, dx, tol)
    return hodlr_axpy_lowrank(x0, dx, tol)


def _lyap_node(a, c, cfg, sh_a, state):
    n = a.n
    if _is_recursion_leaf((a, c), cfg):
        return _leaf_solve(dense_lyap, (a.to_dense(), c.to_dense()),
                           state, cfg.format)

    a11, a22, ua, va = _split(a)
    c11, c22, uc, vc = _split(c)
    n1 = a11.n
    if c11.n != n1:
        raise TreeMismatch("coefficient trees split at different points")

    x1 = _lyap_node(a11, c11, cfg, sh_a.restrict(0, n1), state)
    x2 = _lyap_node(a22, c22, cfg, sh_a.restrict(n1, n), state)
    x0 = _blkdiag(x1, x2, cfg.format)
    if cfg.format == "hss":
        x0.symmetric = True

    dc = _sym_part(uc, vc)
    if ua.shape[1] == 0 and dc.rank == 0:
        return x0
    dx = _lyap_correction(sh_a.handle(a), ua, va, dc, x0, cfg, state, n)
    return _sym_update(x0, dx, cfg, state)


def _lyap_hermitian_node(a, c, cfg, sh_a, state):
    n = a.n
    if _is_recursion_leaf((a, c), cfg):
        return _leaf_solve(dense_lyap, (a.to_dense(), c.to_dense()),
                           state, cfg.format)

    # -A is positive definite: split it at rank k instead of 2k
    h0, w, sig = hss_hermitian_split(hss_scale(a, -1.0))
    a0 = hss_scale(h0, -1.0)
    c0, dc_fac = rhs_theta_split(c, 1.0)
    n1 = a0.a11.n

    # A0 blocks differ from A's by the splitting terms -V sig V^T, -U sig U^T
    v_blk, u_blk = w[:n1], -w[n1:]
    sh_1 = sh_a.restrict(0, n1).augmented(-v_blk * sig, v_blk)
    sh_2 = sh_a.restrict(n1, n).augmented(-u_blk * sig, u_blk)
    x1 = _lyap_hermitian_node(a0.a11, c0.a11, cfg, sh_1, state)
    x2 = _lyap_hermitian_node(a0.a22, c0.a22, cfg, sh_2, state)
    x0 = hss_blkdiag(x1, x2)
    x0.symmetric = True

    dc = _sym_part(dc_fac.left, dc_fac.right)
    if sig.size == 0 and dc.rank == 0:
        return x0
    dx = _lyap_correction(sh_a.handle(a), w * sig, w, dc, x0, cfg, state, n)
    return _sym_update(x0, dx, cfg, state)


def _final_report(x, res_abs, coeff_norm, state, cfg, t0):
    x_norm = x.norm_est()
    scale = max(coeff_norm * x_norm, np.finfo(float).tiny)
    budget = state.budget_abs / scale + state.compressions * cfg.tol_trunc
    extras = {"residual_abs": float(res_abs),
              "leaf_solves": state.leaf_solves,
              "corrections": state.corrections,
              "x_norm_est": float(x_norm)}
    return SolveReport(float(res_abs / scale), state.iters, x.rank(),
                       time.perf_counter() - t0, float(budget),
                       converged="max_steps_exceeded" not in state.flags,
                       flags=list(state.flags), extras=extras)


def _lyap_residual(a, c, x):
    def apply(w):
        return a.matvec(x.matvec(w)) + x.matvec(a.rmatvec(w)) - c.matvec(w)

    def apply_t(w):
        return x.rmatvec(a.rmatvec(w)) + a.matvec(x.rmatvec(w)) - c.rmatvec(w)

    return two_norm_estimate(apply, apply_t, c.n)


def dac_sylv(a, b, c, cfg, *, a_sparse=None, b_sparse=None,
             a_lowrank=None, b_lowrank=None):
    """Solve A X + X B = C by divide and conquer over the cluster tree.

    A, B, C share the format named by cfg and compatible trees; the
    numerical ranges of A and -B must be disjoint (caller contract, as for
    the dense solver). a_sparse/b_sparse optionally mirror A and B as
    sparse matrices for fast factorization of the correction operators;
    a_lowrank/b_lowrank add a low-rank term when a coefficient is
    sparse-plus-low-rank. The structured input must equal the mirror's sum.

    Returns (X, report) with X in the coefficient format. residual_est is
    ||A X + X B - C||_2 / ((||A||_2 + ||B||_2) ||X||_2) by power iteration
    (absolute value under extras["residual_abs"]); residual_budget is the
    first-order sum of inner-solve budgets and truncation events on the
    same scale.
    """
    t0 = time.perf_counter()
    _check_inputs(((a, "A"), (b, "B"), (c, "C")), cfg)
    coeff = a.norm_est() + b.norm_est()
    state = _State(coeff)
    x = _sylv_node(a, b, c, cfg, _shadow(a_sparse, a_lowrank),
                   _shadow(b_sparse, b_lowrank), state)

    def apply(w):
        return a.matvec(x.matvec(w)) + x.matvec(b.matvec(w)) - c.matvec(w)

    def apply_t(w):
        return x.rmatvec(a.rmatvec(w)) + b.rmatvec(x.rmatvec(w)) - c.rmatvec(w)

    res_abs = two_norm_estimate(apply, apply_t, c.n)
    return x, _final_report(x, res_abs, coeff, state, cfg, t0)


def dac_lyap(a, c, cfg, *, a_sparse=None, a_lowrank=None):
    """Solve A X + X A^T = C for symmetric C; X is exactly symmetric.

    Corrections split their indefinite right-hand side into two
    sign-definite Lyapunov solves per node. Definiteness of X is not
    preserved in general.
    """
    t0 = time.perf_counter()
    _check_inputs(((a, "A"), (c, "C")), cfg)
    coeff = 2.0 * a.norm_est()
    state = _State(coeff)
    x = _lyap_node(a, c, cfg, _shadow(a_sparse, a_lowrank), state)
    res_abs = _lyap_residual(a, c, x)
    return x, _final_report(x, res_abs, coeff, state, cfg, t0)


def dac_lyap_hermitian_split(a, c, cfg, *, a_sparse=None, a_lowrank=None):
    """dac_lyap for HSS A with -A positive definite.

    Uses the rank-k Hermitian splitting of -A in place of the general
    rank-2k one and the matching theta-splitting (theta = 1) of the
    right-hand side; NotDefinite propagates when a diagonal block of the
    split loses definiteness.
    """
    if cfg.format != "hss":
        raise ValueError("the Hermitian splitting path requires HSS format")
    t0 = time.perf_counter()
    _check_inputs(((a, "A"), (c, "C")), cfg)
    coeff = 2.0 * a.norm_est()
    state = _State(coeff)
    x = _lyap_hermitian_node(a, c, cfg, _shadow(a_sparse, a_lowrank), state)
    res_abs = _lyap_residual(a, c, x)
    return x, _final_report(x, res_abs, coeff, state, cfg, t0)
