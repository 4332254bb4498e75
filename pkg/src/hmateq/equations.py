"""Low-rank update solves and Newton methods for algebraic Riccati equations.

Given a reference solution X0 of A0 X0 + X0 B0 = C0, the solution of the
perturbed equation (A0+dA) X + X (B0+dB) = C0+dC is X0 + dX where dX solves a
correction equation whose right-hand side dC - dA X0 - X0 dB has rank at most
rank(dA)+rank(dB)+rank(dC). ``update_sylv`` and ``update_lyap_stable`` wrap
the extended Krylov solver around this observation; the residual of the
composed solution on the perturbed equation is bounded by the reference
residual plus the correction residual, which the reports accumulate.

``newton_riccati`` applies the same idea across Kleinman-Newton steps for
A X + X A^T - X B_U B_U^T X = C: after the first (possibly expensive) Lyapunov
solve, step k solves A_k dX_k + dX_k A_k^T = (dX_{k-1} B_U)(dX_{k-1} B_U)^T,
whose right-hand side has rank at most rank(B_U) regardless of rank(C). The
inverse of A_k = A - X_k B_U B_U^T is never formed; it is applied through the
Sherman-Morrison-Woodbury identity on top of a factorization of A - X0 B.
``standard_newton`` is the plain Kleinman iteration used as a baseline.
"""

from dataclasses import dataclass
import time

import numpy as np
import scipy.sparse

from .dense import dense_lyap, two_norm_estimate
from .errors import DimensionMismatch, FirstStepFailed, StabilityLost
from .krylov import (
    OperatorHandle,
    low_rank_lyap,
    low_rank_sylv,
    operator_from_dense,
    operator_from_sparse,
    woodbury_handle,
)
from .lowrank import (
    LowRankFactor,
    SymLowRank,
    _matvec,
    assemble_rhs,
    split_indefinite,
    sym_compress,
)
from .report import SolveReport

FLAVORS = ("sylvester", "lyapunov-stable")


@dataclass
class SylvesterProblem:
    """A Sylvester equation A X + X B = C, or its stable-Lyapunov special case.

    ``flavor`` is "sylvester" or "lyapunov-stable"; the latter asserts B = A^T
    and C symmetric negative semidefinite, which is checked when the fields
    are dense arrays (structured operands are validated by their solvers).
    """

    a: object
    b: object
    c: object
    flavor: str = "sylvester"

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        na, mb = _dim_of(self.a), _dim_of(self.b)
        if isinstance(self.c, np.ndarray):
            if na is not None and self.c.shape[0] != na:
                raise DimensionMismatch("C rows do not match A")
            if mb is not None and self.c.shape[1] != mb:
                raise DimensionMismatch("C columns do not match B")
        if self.flavor == "lyapunov-stable":
            if na is not None and mb is not None and na != mb:
                raise DimensionMismatch("lyapunov-stable requires square system")
            if isinstance(self.a, np.ndarray) and isinstance(self.b, np.ndarray):
                if not np.allclose(self.b, self.a.T, atol=1e-12 * max(1.0, np.abs(self.a).max())):
                    raise ValueError("lyapunov-stable requires B = A^T")
            if isinstance(self.c, np.ndarray):
                scale = max(1.0, np.abs(self.c).max())
                if np.abs(self.c - self.c.T).max() > 1e-12 * scale:
                    raise ValueError("lyapunov-stable requires symmetric C")
                if np.linalg.eigvalsh((self.c + self.c.T) / 2).max() > 1e-10 * scale:
                    raise ValueError("lyapunov-stable requires C negative semidefinite")


def _dim_of(a):
    if a is None:
        return None
    if isinstance(a, OperatorHandle):
        return a.dim
    shape = getattr(a, "shape", None)
    return None if shape is None else shape[0]


def _as_handle(a):
    if isinstance(a, OperatorHandle):
        return a
    if scipy.sparse.issparse(a):
        return operator_from_sparse(a)
    return operator_from_dense(np.asarray(a, dtype=float))


def _perturbed(base, fac):
    if fac is None or fac.rank == 0:
        return base
    return woodbury_handle(base, fac.left, fac.right)


def _fac_rank(fac):
    return 0 if fac is None else fac.rank


def update_sylv(a0, da, b0, db, c0, dc, x0, tol, *, tol0=0.0, tol_trunc=None,
                max_steps=None):
    """Solve (A0+dA) X + X (B0+dB) = C0+dC given X0 with A0 X0 + X0 B0 = C0.

    ``a0``/``b0`` are dense arrays, sparse matrices or OperatorHandles for the
    reference coefficients; ``da``/``db``/``dc`` are LowRankFactors (or None).
    ``c0`` only participates through X0 and is accepted for completeness; it
    may be None. ``x0`` is a dense array or None (meaning zero). ``tol0`` is
    the residual level of X0 on the reference equation and enters the
    ``residual_budget`` of the report: the residual of the returned X on the
    perturbed equation is the reference residual plus the correction residual.

    Returns ``(X, report)`` with X dense when ``x0`` is dense, otherwise the
    correction as a LowRankFactor.
    """
    t0 = time.perf_counter()
    op_a0, op_b0 = _as_handle(a0), _as_handle(b0)
    n, m = op_a0.dim, op_b0.dim
    if x0 is not None and x0.shape != (n, m):
        raise DimensionMismatch(f"x0 must be {n} x {m}, got {x0.shape}")

    rhs = assemble_rhs(da, db, dc, x0, n, m)
    if rhs.rank == 0:
        x = x0.copy() if x0 is not None else LowRankFactor.zero(n, m)
        rep = SolveReport(0.0, 0, 0, time.perf_counter() - t0, tol0,
                          extras={"rhs_rank": 0})
        return x, rep

    dx, rep = low_rank_sylv(_perturbed(op_a0, da), _perturbed(op_b0, db),
                            rhs.left, rhs.right, tol,
                            max_steps=max_steps, tol_trunc=tol_trunc)
    x = x0 + dx.to_dense() if x0 is not None else dx
    report = SolveReport(rep.residual_est, rep.iterations, rep.output_rank,
                         time.perf_counter() - t0, tol0 + rep.residual_budget,
                         converged=rep.converged, flags=list(rep.flags),
                         extras={**rep.extras, "rhs_rank": rhs.rank})
    return x, report


def update_lyap_stable(a0, da, c0, dc_sym, x0, tol, *, tol0=0.0,
                       max_steps=None):
    """Lyapunov variant of update_sylv for stable perturbed coefficients.

    Solves (A0+dA) X + X (A0+dA)^T = C0+dC with dC symmetric (a SymLowRank or
    None). The correction right-hand side D = dC - dA X0 - X0 dA^T is
    indefinite; it is split as D = U1 U1^T - U2 U2^T and the correction is
    obtained from two sign-definite solves, dX = dX2 - dX1 with
    A dXi + dXi A^T = -Ui Ui^T, which keeps each extended Krylov run on a
    semidefinite right-hand side. The result is symmetric by construction.
    """
    t0 = time.perf_counter()
    op = _as_handle(a0)
    n = op.dim
    if x0 is not None and x0.shape != (n, n):
        raise DimensionMismatch(f"x0 must be {n} x {n}, got {x0.shape}")

    empty = np.zeros((n, 0))
    u_a = da.left if da is not None else empty
    v_a = da.right if da is not None else empty
    u_c = dc_sym.basis if dc_sym is not None else empty
    s_c = dc_sym.core if dc_sym is not None else np.zeros(0)
    u1, u2 = split_indefinite(u_a, v_a, u_c, s_c, x0)

    op_pert = _perturbed(op, da)
    res = budget = 0.0
    iters = 0
    flags = []
    parts = []
    for u_i, orient in ((u2, 1.0), (u1, -1.0)):
        if u_i.shape[1] == 0:
            continue
        dx_i, rep_i = low_rank_lyap(op_pert, u_i, -1, tol, max_steps=max_steps)
        res += rep_i.residual_est
        budget += rep_i.residual_budget
        iters += rep_i.iterations
        flags.extend(rep_i.flags)
        if dx_i.rank:
            parts.append((dx_i, orient))

    if parts:
        basis = np.hstack([p.basis for p, _ in parts])
        core = np.concatenate([o * p.core for p, o in parts])
        # 1e-14 pass only removes exact overlap between the two solves
        dx = sym_compress(SymLowRank(basis, core), 1e-14)
    else:
        dx = SymLowRank.zero(n)

    x = x0 + dx.to_dense() if x0 is not None else dx
    converged = "max_steps_exceeded" not in flags
    report = SolveReport(res, iters, dx.rank, time.perf_counter() - t0,
                         tol0 + budget, converged=converged, flags=flags,
                         extras={"rhs_rank": u1.shape[1] + u2.shape[1]})
    return x, report


@dataclass
class CareSolution:
    """Riccati solution kept as a structured base plus a symmetric tail.

    ``base`` is the first Newton iterate in whatever representation the first
    step solver produced; ``tail`` accumulates the low-rank corrections. Both
    sides act through ``matvec``; ``to_dense`` requires a dense-able base.
    """

    base: object
    tail: SymLowRank

    @property
    def shape(self):
        return (self.tail.basis.shape[0], self.tail.basis.shape[0])

    def matvec(self, w):
        return _matvec(self.base, w) + self.tail.matvec(w)

    rmatvec = matvec  # symmetric

    def to_dense(self):
        base = self.base.to_dense() if hasattr(self.base, "to_dense") else np.asarray(self.base)
        m = base + self.tail.to_dense()
        return (m + m.T) / 2.0


def _x_matvec(x, w):
    return np.zeros_like(w) if x is None else _matvec(x, w)


def _dense_first_step(a, b_u, c, x0):
    """Default first Newton step: materialize A0, C0 and call dense_lyap."""
    a_d = a.toarray() if scipy.sparse.issparse(a) else np.asarray(a, dtype=float)
    c_d = c.to_dense() if hasattr(c, "to_dense") else np.asarray(c, dtype=float)
    if x0 is None:
        return dense_lyap(a_d, c_d), None
    w0 = _matvec(x0, b_u)
    x0_d = x0.to_dense() if hasattr(x0, "to_dense") else np.asarray(x0, dtype=float)
    return dense_lyap(a_d - w0 @ b_u.T, c_d - w0 @ w0.T), None


def newton_riccati(a, b_u, c, x0=None, tol_nw=1e-8, first_step_solver=None, *,
                   tol_inner=None, max_newton=50, a0_op=None):
    """Low-rank update Newton method for A X + X A^T - X B_U B_U^T X = C.

    ``b_u`` is the tall factor of B = B_U B_U^T; ``x0`` (dense, SymLowRank or
    None for zero) must be symmetric with A - x0 B stable. The first iterate
    X1 comes from ``first_step_solver(a, b_u, c, x0)`` returning
    ``(x1, report_or_None)``; the default materializes the equation and uses
    dense_lyap. Every later step solves a correction Lyapunov equation whose
    right-hand side (dX_{k-1} B_U)(dX_{k-1} B_U)^T has rank at most
    rank(B_U); its operator A - X_k B is applied via Woodbury updates of
    A - x0 B (pass ``a0_op`` when that matrix needs a custom factorization).
    Stops when ||dX_k||_2 < tol_nw * ||X1||_2 with ||X1||_2 estimated by
    power iteration (recorded as extras["x1_norm_est"]).

    Returns ``(X, report)``: X is dense when X1 is dense, otherwise a
    CareSolution pairing X1 with the accumulated correction tail. The report's
    residual figures bound the algebraic Riccati residual at exit: the
    quadratic remainder ||dX_k B dX_k||_2 plus the last linear solve residual.
    """
    t0 = time.perf_counter()
    b_u = np.asarray(b_u, dtype=float)
    if b_u.ndim == 1:
        b_u = b_u[:, None]
    n = b_u.shape[0]
    if tol_inner is None:
        tol_inner = tol_nw / 10.0

    x0_bu = _x_matvec(x0, b_u)
    try:
        x1, first_rep = (first_step_solver or _dense_first_step)(a, b_u, c, x0)
    except Exception as exc:
        raise FirstStepFailed(f"first Newton step failed: {exc}") from exc

    if a0_op is None:
        if x0 is None:
            a0_op = _as_handle(a)
        elif isinstance(a, np.ndarray) or scipy.sparse.issparse(a):
            base = a if isinstance(a, np.ndarray) else a.toarray()
            a0_op = operator_from_dense(np.asarray(base, dtype=float) - x0_bu @ b_u.T)
        else:
            a0_op = woodbury_handle(a, -x0_bu, b_u)

    x1_norm = two_norm_estimate(lambda w: _matvec(x1, w), lambda w: _matvec(x1, w), n)
    x1_bu = _matvec(x1, b_u)
    c_u = x1_bu - x0_bu  # dX_0 B_U
    tail = SymLowRank.zero(n)
    tail_bu = np.zeros((n, b_u.shape[1]))
    # recompression below the error floor tau_NW^2 of the quadratic method
    tol_tail = max(1e-15, tol_nw * tol_nw / 100.0)
    correction_norms, rhs_ranks = [], []
    # each step's linear solve residual persists in the Riccati residual (the
    # correction right-hand side only cancels the quadratic remainder), so
    # residual figures accumulate over all steps
    res = budget = 0.0
    converged = False
    flags = []
    grow = 0

    for k in range(1, max_newton + 1):
        # A_k = A - X_k B = (A - x0 B) + (x0 - X_k) B_U B_U^T
        op_k = _perturbed(a0_op, LowRankFactor(x0_bu - x1_bu - tail_bu, b_u))
        rhs_ranks.append(int(np.linalg.matrix_rank(c_u)) if c_u.size else 0)
        dx, rep = low_rank_lyap(op_k, c_u, 1, tol_inner, max_steps=n)
        d_norm = dx.norm2()
        correction_norms.append(d_norm)
        res += rep.residual_est
        budget += rep.residual_budget
        for f in rep.flags:
            if f not in flags:
                flags.append(f)

        c_u = dx.matvec(b_u)
        tail = sym_compress(SymLowRank(np.hstack([tail.basis, dx.basis]),
                                       np.concatenate([tail.core, dx.core])),
                            tol_tail)
        tail_bu = tail.matvec(b_u)

        if d_norm < tol_nw * x1_norm:
            converged = True
            break
        # corrections may climb for a while when X1 overshoots (nearly
        # singular A makes the first Lyapunov solve much larger than the
        # Riccati solution); only growth past the overshoot itself means the
        # iterate stopped being stabilizing
        if len(correction_norms) > 1 and d_norm > correction_norms[-2]:
            grow += 1
            if grow >= 3 and d_norm > x1_norm:
                raise StabilityLost(
                    f"correction norms grew for 3 consecutive Newton steps "
                    f"past ||X1|| (last {d_norm:.3e})")
        else:
            grow = 0
    else:
        flags = flags + ["max_newton_exceeded"]

    # Riccati residual at exit: quadratic remainder plus linear residuals
    quad = np.linalg.norm(c_u, 2) ** 2 if c_u.size else 0.0
    extras = {"correction_norms": correction_norms, "rhs_ranks": rhs_ranks,
              "x1_norm_est": x1_norm, "newton_steps": k}
    if first_rep is not None:
        extras["first_step"] = first_rep
        budget += first_rep.residual_budget
    report = SolveReport(quad + res, k, tail.rank, time.perf_counter() - t0,
                         quad + budget, converged=converged, flags=flags,
                         extras=extras)
    if isinstance(x1, np.ndarray):
        x = x1 + tail.to_dense()
        return (x + x.T) / 2.0, report
    return CareSolution(x1, tail), report


def standard_newton(a, b_u, c, x0=None, tol_nw=1e-8, *, tol_inner=None,
                    max_newton=50, keep_iterates=False):
    """Plain Kleinman-Newton iteration for A X + X A^T - X B_U B_U^T X = C.

    Each step solves (A - X_k B) X_{k+1} + X_{k+1} (A - X_k B)^T =
    C - X_k B X_k from scratch. Dense ``c`` selects the dense_lyap path
    (``a`` must be dense too); a SymLowRank ``c`` with nonpositive core
    selects the low-rank path where the step right-hand side
    -[C_U, X_k B_U][C_U, X_k B_U]^T keeps rank at most rank(C)+rank(B_U).
    Baseline for comparisons; stops like newton_riccati.
    """
    t0 = time.perf_counter()
    b_u = np.asarray(b_u, dtype=float)
    if b_u.ndim == 1:
        b_u = b_u[:, None]
    n = b_u.shape[0]
    if tol_inner is None:
        tol_inner = tol_nw / 10.0

    lowrank_path = isinstance(c, SymLowRank)
    if lowrank_path:
        if c.core.max(initial=0.0) > 0:
            raise ValueError("low-rank path requires C negative semidefinite")
        c_fac = c.basis * np.sqrt(-c.core)
        base_op = _as_handle(a)
    else:
        a = np.asarray(a, dtype=float)
        c = np.asarray(c, dtype=float)

    x_k = x0
    x1_norm = None
    step_norms = []
    iterates = []
    res = budget = 0.0
    converged = False
    flags = []
    for k in range(1, max_newton + 1):
        xb = _x_matvec(x_k, b_u)
        if lowrank_path:
            op_k = _perturbed(base_op, LowRankFactor(-xb, b_u))
            x_next, rep = low_rank_lyap(op_k, np.hstack([c_fac, xb]), -1,
                                        tol_inner, max_steps=n)
            res, budget, flags = rep.residual_est, rep.residual_budget, list(rep.flags)
            diff = SymLowRank(
                np.hstack([x_next.basis] + ([x_k.basis] if x_k is not None else [])),
                np.concatenate([x_next.core] + ([-x_k.core] if x_k is not None else [])))
            d_norm = sym_compress(diff, 1e-14).norm2()
        else:
            x_next = dense_lyap(a - xb @ b_u.T, c - xb @ xb.T)
            d_norm = np.linalg.norm(x_next - (x_k if x_k is not None else 0.0), 2)
        step_norms.append(d_norm)
        if keep_iterates:
            iterates.append(x_next)
        if x1_norm is None:
            x1_norm = two_norm_estimate(lambda w: _matvec(x_next, w),
                                        lambda w: _matvec(x_next, w), n)
        x_k = x_next
        if d_norm < tol_nw * max(x1_norm, 1e-300) or (k > 1 and d_norm == 0.0):
            converged = True
            break
    else:
        flags = flags + ["max_newton_exceeded"]

    rank = x_k.rank if lowrank_path else min(x_k.shape)
    extras = {"step_norms": step_norms, "x1_norm_est": x1_norm}
    if keep_iterates:
        extras["iterates"] = iterates
    report = SolveReport(res, k, rank, time.perf_counter() - t0, budget,
                         converged=converged, flags=flags, extras=extras)
    return x_k, report
