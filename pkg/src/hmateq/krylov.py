"""Rational (extended) Krylov solver for Sylvester equations with low-rank
right-hand sides.

The subspace for the left coefficient is EK_t(A, U) = span{U, A^{-1}U, AU,
A^{-2}U, ...}; the right side uses EK_t(B^T, V). Each step multiplies the
newest A-chain columns by A and the newest inverse-chain columns by A^{-1},
orthogonalizes against the basis (classical Gram-Schmidt with one full
re-orthogonalization pass) and deflates each chain half with a pivoted QR.
The compressed equation is solved densely every iteration and the residual is
read off the subdiagonal coupling blocks of the projected operators, so the
stopping test costs only small-matrix work; the solution norm entering the
test is a power-method lower bound, which can only make stopping stricter.
"""

import time
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .dense import dense_lyap, dense_sylv, two_norm_estimate
from .errors import BreakdownUnrecoverable, DimensionMismatch, NumericallySingular
from .lowrank import LowRankFactor, SymLowRank
from .report import SolveReport

DEFLATION_TOL = 1e-12


def _norm2_lower(m, sym):
    """2-norm of a small dense matrix, exact when cheap.

    Larger matrices get a power-method value, which approaches the norm from
    below; callers divide a residual by it, so the bias is conservative.
    """
    if m.size == 0:
        return 0.0
    if min(m.shape) <= 32:
        return float(np.linalg.norm(m, 2))
    mt = m if sym else m.T
    return two_norm_estimate(lambda w: m @ w, lambda w: mt @ w, m.shape[1])


class OperatorHandle:
    """A square operator with forward/adjoint applies and solves.

    ``apply``/``apply_t`` map column blocks to A W / A^T W; ``apply_inv`` /
    ``apply_inv_t`` solve with A / A^T. Factorizations behind the solves are
    computed once when the handle is built.
    """

    def __init__(self, dim, apply, apply_t, apply_inv, apply_inv_t):
        self.dim = int(dim)
        self.apply = apply
        self.apply_t = apply_t
        self.apply_inv = apply_inv
        self.apply_inv_t = apply_inv_t


def operator_from_dense(a):
    """Handle backed by a dense LU factorization."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"operator must be square, got {a.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.min(initial=np.inf) <= a.shape[0] * np.finfo(float).eps * d.max(initial=0.0):
        raise NumericallySingular("dense operator is numerically singular")
    return OperatorHandle(
        a.shape[0],
        lambda w: a @ w,
        lambda w: a.T @ w,
        lambda w: scipy.linalg.lu_solve((lu, piv), w, check_finite=False),
        lambda w: scipy.linalg.lu_solve((lu, piv), w, trans=1, check_finite=False),
    )


def operator_from_sparse(s):
    """Handle backed by a sparse LU (the banded fast path)."""
    csc = scipy.sparse.csc_matrix(s)
    if csc.shape[0] != csc.shape[1]:
        raise DimensionMismatch(f"operator must be square, got {csc.shape}")
    try:
        lu = scipy.sparse.linalg.splu(csc)
    except RuntimeError as exc:
        raise NumericallySingular(str(exc)) from exc
    csr = csc.tocsr()

    def inv(w):
        return lu.solve(np.ascontiguousarray(w))

    def inv_t(w):
        return lu.solve(np.ascontiguousarray(w), trans="T")

    return OperatorHandle(csc.shape[0], lambda w: csr @ w, lambda w: csr.T @ w, inv, inv_t)


def transpose_handle(h):
    """Handle for A^T given a handle for A."""
    return OperatorHandle(h.dim, h.apply_t, h.apply, h.apply_inv_t, h.apply_inv)


def woodbury_handle(base, w_fac, z_fac):
    """Handle for A + W Z^T reusing the factorization of A.

    Solves use the Sherman-Morrison-Woodbury identity; the (r x r) capacitance
    matrix I + Z^T A^{-1} W is factored once.
    """
    w_fac = np.atleast_2d(np.asarray(w_fac, dtype=float))
    z_fac = np.atleast_2d(np.asarray(z_fac, dtype=float))
    r = w_fac.shape[1]
    if z_fac.shape[1] != r or w_fac.shape[0] != base.dim or z_fac.shape[0] != base.dim:
        raise DimensionMismatch("update factors must be dim x r")
    if r == 0:
        return base
    aiw = base.apply_inv(w_fac)
    aitz = base.apply_inv_t(z_fac)
    cap = np.eye(r) + z_fac.T @ aiw
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(cap, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.min(initial=np.inf) <= r * np.finfo(float).eps * d.max(initial=0.0):
        raise NumericallySingular("Woodbury capacitance matrix is singular")

    def apply(v):
        return base.apply(v) + w_fac @ (z_fac.T @ v)

    def apply_t(v):
        return base.apply_t(v) + z_fac @ (w_fac.T @ v)

    def apply_inv(v):
        t = base.apply_inv(v)
        return t - aiw @ scipy.linalg.lu_solve((lu, piv), z_fac.T @ t, check_finite=False)

    def apply_inv_t(v):
        t = base.apply_inv_t(v)
        return t - aitz @ scipy.linalg.lu_solve(
            (lu, piv), w_fac.T @ t, trans=1, check_finite=False
        )

    return OperatorHandle(base.dim, apply, apply_t, apply_inv, apply_inv_t)


def deflate_block(w, tol_defl=DEFLATION_TOL):
    """Orthonormalize a block, dropping columns that pivoted QR finds dependent.

    Columns whose pivoted-QR diagonal satisfies |R_ii| <= tol_defl * |R_11|
    are removed. Returns the orthonormal block (possibly 0 columns).
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.shape[1] == 0:
        return w.copy()
    q, r, _ = scipy.linalg.qr(w, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        return w[:, :0].copy()
    k = int(np.count_nonzero(d > tol_defl * d[0]))
    return np.ascontiguousarray(q[:, :k])


class EkBasis:
    """One side of the extended Krylov recursion.

    Maintains the orthonormal basis Q, the image AQ, the projection
    K = Q^T A Q, the coefficients Q^T U of the right-hand-side block, and the
    column ranges of the newest block split by chain (A-powers vs
    A^{-1}-powers).
    """

    def __init__(self, op, u, tol_defl):
        self.op = op
        self.tol_defl = tol_defl
        n = op.dim
        self.q = np.zeros((n, 0))
        self.aq = np.zeros((n, 0))
        self.k = np.zeros((0, 0))
        self.coef = np.zeros((0, u.shape[1]))
        self.u0 = u
        self.plus = np.zeros(0, dtype=int)   # newest-block A-chain columns
        self.minus = np.zeros(0, dtype=int)  # newest-block inverse-chain columns
        self.stalled = False
        w_minus = op.apply_inv(u) if u.shape[1] else u
        self._append(u, w_minus)

    @property
    def ncols(self):
        return self.q.shape[1]

    def _orth_against_basis(self, w):
        for _ in range(2):  # CGS + one full re-orthogonalization pass
            if self.q.shape[1]:
                w = w - self.q @ (self.q.T @ w)
        return w

    def _append(self, w_plus, w_minus):
        """Orthogonalize + deflate the two chain halves and grow the basis."""
        new_cols = []
        ranges = []
        start = self.ncols
        for w in (w_plus, w_minus):
            scale = np.sqrt((w * w).sum(axis=0)).max(initial=0.0)
            w = self._orth_against_basis(w)
            for done in new_cols:
                w = w - done @ (done.T @ w)
            # a half that is (numerically) contained in the basis must not be
            # renormalized into noise columns
            post = np.sqrt((w * w).sum(axis=0)).max(initial=0.0)
            if post <= 1e-14 * scale:
                block = w[:, :0]
            else:
                block = deflate_block(w, self.tol_defl)
                block = self._orth_against_basis(block)
                for done in new_cols:
                    block = block - done @ (done.T @ block)
                block = np.linalg.qr(block)[0] if block.shape[1] else block
            new_cols.append(block)
            ranges.append(np.arange(start, start + block.shape[1]))
            start += block.shape[1]
        fresh = np.hstack(new_cols)
        if fresh.shape[1] == 0:
            self.stalled = True
            self.plus = np.zeros(0, dtype=int)
            self.minus = np.zeros(0, dtype=int)
            return
        a_fresh = self.op.apply(fresh)
        c_old = self.ncols
        self.q = np.hstack([self.q, fresh])
        self.aq = np.hstack([self.aq, a_fresh])
        k_new = np.empty((self.ncols, self.ncols))
        k_new[:c_old, :c_old] = self.k
        k_new[:c_old, c_old:] = self.q[:, :c_old].T @ a_fresh
        k_new[c_old:, :] = fresh.T @ self.aq
        self.k = k_new
        self.coef = np.vstack([self.coef, fresh.T @ self.u0])
        self.plus, self.minus = ranges

    def expand(self):
        """Add the next extended Krylov block."""
        if self.stalled:
            return
        if self.ncols >= self.op.dim:
            self.stalled = True
            return
        w_plus = self.aq[:, self.plus] if self.plus.size else self.q[:, :0]
        w_minus = (
            self.op.apply_inv(np.ascontiguousarray(self.q[:, self.minus]))
            if self.minus.size
            else self.q[:, :0]
        )
        self._append(w_plus, w_minus)


def projected_residual_norm(k_a, k_b, y, c_a, c_b):
    """Residual 2-norm of the Galerkin solution from recurrence blocks only.

    ``k_a``/``k_b`` are the projections Q^T A Q and the B-side analogue over
    the *extended* bases; ``y`` solves the compressed equation over the
    leading ``c_a`` x ``c_b`` blocks. The residual matrix is
    [[0, Y Kb21^T], [Ka21 Y, 0]], whose norm is the larger of the two blocks.
    """
    ka_low = k_a[c_a:, :c_a]
    kb_low = k_b[c_b:, :c_b]
    r1 = np.linalg.norm(ka_low @ y, 2) if ka_low.size else 0.0
    r2 = np.linalg.norm(y @ kb_low.T, 2) if kb_low.size else 0.0
    return max(r1, r2)


def _default_max_steps(n, m, s):
    return max(1, min(n, m) // (2 * max(1, s)) - 1)


def low_rank_sylv(op_a, op_b, u, v, tol, max_steps=None, tol_trunc=None,
                  tol_defl=DEFLATION_TOL, res_scale=None):
    """Solve A X + X B = U V^T with X returned as a low-rank factor.

    ``op_a`` and ``op_b`` are OperatorHandles for A and B. Iterates until the
    projected residual drops below tol * res_scale * ||X~||_2 or ``max_steps``
    blocks have been added (flagging "max_steps_exceeded" on the report and
    returning the best iterate). ``res_scale`` defaults to 1; callers whose
    coefficients are far from unit scale pass ||A||+||B|| so the test matches
    the relative residual ||R|| / ((||A||+||B||) ||X||) - with badly scaled
    coefficients an absolute target below eps * ||A|| * ||X|| could never be
    met. The output factor is retruncated at ``tol_trunc`` (defaults to
    ``tol``).
    """
    t0 = time.perf_counter()
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if u.shape[0] != op_a.dim or v.shape[0] != op_b.dim:
        raise DimensionMismatch("RHS factors do not match operator dimensions")
    if u.shape[1] != v.shape[1]:
        raise DimensionMismatch("U and V must have the same number of columns")
    n, m = op_a.dim, op_b.dim
    if tol_trunc is None:
        tol_trunc = tol
    if res_scale is None:
        res_scale = 1.0
    s = u.shape[1]
    if s == 0:
        rep = SolveReport(wall_time_s=time.perf_counter() - t0)
        return LowRankFactor.zero(n, m), rep
    if max_steps is None:
        max_steps = _default_max_steps(n, m, s)

    side_a = EkBasis(op_a, u, tol_defl)
    side_b = EkBasis(transpose_handle(op_b), v, tol_defl)
    if side_a.ncols == 0 or side_b.ncols == 0:
        # RHS was exactly zero
        rep = SolveReport(wall_time_s=time.perf_counter() - t0)
        return LowRankFactor.zero(n, m), rep

    y = np.zeros((0, 0))
    c_a, c_b = side_a.ncols, side_b.ncols
    res = np.inf
    steps = 0
    flags = []
    while True:
        steps += 1
        c_a, c_b = side_a.ncols, side_b.ncols
        side_a.expand()
        side_b.expand()
        a_tilde = side_a.k[:c_a, :c_a]
        b_tilde = side_b.k[:c_b, :c_b].T
        c_tilde = side_a.coef[:c_a] @ side_b.coef[:c_b].T
        y = dense_sylv(a_tilde, b_tilde, c_tilde)
        norm_y = _norm2_lower(y, sym=False)
        target = tol * max(res_scale * norm_y, np.finfo(float).tiny)
        res = projected_residual_norm(side_a.k, side_b.k, y, c_a, c_b)
        if res <= target:
            break
        if side_a.stalled and side_b.stalled:
            # both spaces are invariant; the Galerkin solve is as good as it gets
            if norm_y > 0:
                raise BreakdownUnrecoverable(
                    f"all block columns deflated with residual {res:.3e} above tolerance"
                )
            break
        if steps >= max_steps:
            flags.append("max_steps_exceeded")
            break

    # assemble and retruncate the solution factor
    w, sig, zh = np.linalg.svd(y) if y.size else (
        np.zeros((c_a, 0)), np.zeros(0), np.zeros((0, c_b)))
    if sig.size and sig[0] > 0:
        k = int(np.count_nonzero(sig > tol_trunc * sig[0]))
    else:
        k = 0
    root = np.sqrt(sig[:k])
    factor = LowRankFactor(
        side_a.q[:, :c_a] @ (w[:, :k] * root),
        side_b.q[:, :c_b] @ (zh[:k].T * root),
    )
    scale = (_norm2_lower(side_a.k, sym=False)
             + _norm2_lower(side_b.k, sym=False)) if y.size else 0.0
    norm_y = _norm2_lower(y, sym=False)
    rep = SolveReport(
        residual_est=float(res) if np.isfinite(res) else 0.0,
        iterations=steps,
        output_rank=factor.rank,
        wall_time_s=time.perf_counter() - t0,
        residual_budget=float(res + tol_trunc * norm_y * scale),
        converged="max_steps_exceeded" not in flags,
        flags=flags,
        extras={"basis_cols": (side_a.ncols, side_b.ncols), "rhs_rank": s},
    )
    return factor, rep


def low_rank_lyap(op_a, u, rhs_sign, tol, max_steps=None, tol_trunc=None,
                  tol_defl=DEFLATION_TOL, res_scale=None):
    """Solve A X + X A^T = rhs_sign * U U^T with a single extended Krylov basis.

    Returns a SymLowRank (eigendecomposition of the projected solution,
    truncated at ``tol_trunc``). ``rhs_sign`` must be +1 or -1; ``res_scale``
    scales the stopping test as in low_rank_sylv (pass 2 ||A|| there).
    """
    t0 = time.perf_counter()
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[0] != op_a.dim:
        raise DimensionMismatch("RHS factor does not match operator dimension")
    if rhs_sign not in (-1, 1, -1.0, 1.0):
        raise ValueError("rhs_sign must be +1 or -1")
    n = op_a.dim
    if tol_trunc is None:
        tol_trunc = tol
    if res_scale is None:
        res_scale = 1.0
    s = u.shape[1]
    if s == 0:
        return SymLowRank.zero(n), SolveReport(wall_time_s=time.perf_counter() - t0)
    if max_steps is None:
        max_steps = _default_max_steps(n, n, s)

    side = EkBasis(op_a, u, tol_defl)
    if side.ncols == 0:
        return SymLowRank.zero(n), SolveReport(wall_time_s=time.perf_counter() - t0)

    y = np.zeros((0, 0))
    c = side.ncols
    res = np.inf
    steps = 0
    flags = []
    while True:
        steps += 1
        c = side.ncols
        side.expand()
        a_tilde = side.k[:c, :c]
        coef = side.coef[:c]
        y = dense_lyap(a_tilde, float(rhs_sign) * (coef @ coef.T))
        # the projected solution of a Lyapunov equation is symmetric even
        # when a_tilde is not
        norm_y = _norm2_lower(y, sym=True)
        target = tol * max(res_scale * norm_y, np.finfo(float).tiny)
        ka_low = side.k[c:, :c]
        res = np.linalg.norm(ka_low @ y, 2) if ka_low.size else 0.0
        if res <= target:
            break
        if side.stalled:
            if norm_y > 0:
                raise BreakdownUnrecoverable(
                    f"all block columns deflated with residual {res:.3e} above tolerance"
                )
            break
        if steps >= max_steps:
            flags.append("max_steps_exceeded")
            break

    lam, vec = np.linalg.eigh(y) if y.size else (np.zeros(0), np.zeros((c, 0)))
    top = np.abs(lam).max(initial=0.0)
    keep = np.abs(lam) > tol_trunc * top if top > 0 else np.zeros(lam.shape, dtype=bool)
    order = np.argsort(-np.abs(lam[keep]))
    lam_k = lam[keep][order]
    vec_k = vec[:, keep][:, order]
    sym = SymLowRank(side.q[:, :c] @ vec_k, lam_k)
    scale = 2.0 * _norm2_lower(side.k, sym=False) if y.size else 0.0
    rep = SolveReport(
        residual_est=float(res) if np.isfinite(res) else 0.0,
        iterations=steps,
        output_rank=sym.rank,
        wall_time_s=time.perf_counter() - t0,
        residual_budget=float(res + tol_trunc * top * scale),
        converged="max_steps_exceeded" not in flags,
        flags=flags,
        extras={"basis_cols": (side.ncols,), "rhs_rank": s},
    )
    return sym, rep
