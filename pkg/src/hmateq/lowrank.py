"""Low-rank factors and the operations that keep correction ranks small.

``compress`` implements the QR + small-SVD retruncation used after every
factor concatenation; ``assemble_rhs`` builds the right-hand side of the
correction equation

    (A0 + dA) dX + dX (B0 + dB) = dC - dA X0 - X0 dB

as a rank-(r_A + r_B + r_C) factorization; ``split_indefinite`` separates a
symmetric indefinite right-hand side into its definite parts so a stable
Lyapunov correction can be computed as the difference of two definite solves.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


def _empty(n):
    return np.zeros((n, 0))


def _matvec(x, w):
    """Apply x (ndarray or structured matrix) to a block of columns."""
    if x is None:
        return np.zeros_like(w)
    if isinstance(x, np.ndarray):
        return x @ w
    return x.matvec(w)


def _rmatvec(x, w):
    if x is None:
        return np.zeros_like(w)
    if isinstance(x, np.ndarray):
        return x.T @ w
    return x.rmatvec(w)


@dataclass
class LowRankFactor:
    """Outer-product factorization  left @ right.T  (n x s times s x m)."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.atleast_2d(np.asarray(self.left, dtype=float))
        self.right = np.atleast_2d(np.asarray(self.right, dtype=float))
        if self.left.shape[1] != self.right.shape[1]:
            raise DimensionMismatch(
                f"factor column counts differ: {self.left.shape} vs {self.right.shape}"
            )

    @property
    def rank(self):
        return self.left.shape[1]

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    def to_dense(self):
        return self.left @ self.right.T

    def matvec(self, w):
        return self.left @ (self.right.T @ w)

    def rmatvec(self, w):
        return self.right @ (self.left.T @ w)

    def norm2(self):
        """Exact spectral norm via QR of both factors."""
        if self.rank == 0:
            return 0.0
        ru = np.linalg.qr(self.left, mode="r")
        rv = np.linalg.qr(self.right, mode="r")
        return float(np.linalg.norm(ru @ rv.T, 2))

    @staticmethod
    def zero(n, m):
        return LowRankFactor(_empty(n), _empty(m))


@dataclass
class SymLowRank:
    """Symmetric factorization  basis @ diag(core) @ basis.T."""

    basis: np.ndarray
    core: np.ndarray

    def __post_init__(self):
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        self.core = np.asarray(self.core, dtype=float).reshape(-1)
        if self.basis.shape[1] != self.core.size:
            raise DimensionMismatch(
                f"basis has {self.basis.shape[1]} columns but core has {self.core.size}"
            )

    @property
    def rank(self):
        return self.core.size

    @property
    def shape(self):
        n = self.basis.shape[0]
        return (n, n)

    def to_dense(self):
        m = (self.basis * self.core) @ self.basis.T
        return (m + m.T) / 2.0  # exactly symmetric

    def matvec(self, w):
        t = self.basis.T @ w
        t = self.core[:, None] * t if t.ndim == 2 else self.core * t
        return self.basis @ t

    rmatvec = matvec  # symmetric

    def as_factor(self):
        return LowRankFactor(self.basis * self.core, self.basis)

    def norm2(self):
        if self.rank == 0:
            return 0.0
        r = np.linalg.qr(self.basis, mode="r")
        lam = np.linalg.eigvalsh((r * self.core) @ r.T)
        return float(np.abs(lam).max(initial=0.0))

    @staticmethod
    def zero(n):
        return SymLowRank(_empty(n), np.zeros(0))


def compress(factor, tol_rel):
    """Retruncate a LowRankFactor, dropping sigma_i <= tol_rel * sigma_1.

    QR both factors, SVD the small core, scale sqrt(sigma) into both sides.
    Idempotent, and the output rank never exceeds the input rank.
    """
    if factor.rank == 0:
        return LowRankFactor(factor.left.copy(), factor.right.copy())
    qu, ru = np.linalg.qr(factor.left)
    qv, rv = np.linalg.qr(factor.right)
    w, s, zh = np.linalg.svd(ru @ rv.T)
    if s.size == 0 or s[0] == 0.0:
        return LowRankFactor.zero(*factor.shape)
    k = int(np.count_nonzero(s > tol_rel * s[0]))
    root = np.sqrt(s[:k])
    return LowRankFactor(qu @ (w[:, :k] * root), qv @ (zh[:k].T * root))


def compress_abs(factor, tol_abs):
    """compress() with an absolute singular-value threshold."""
    if factor.rank == 0:
        return LowRankFactor(factor.left.copy(), factor.right.copy())
    qu, ru = np.linalg.qr(factor.left)
    qv, rv = np.linalg.qr(factor.right)
    w, s, zh = np.linalg.svd(ru @ rv.T)
    k = int(np.count_nonzero(s > tol_abs))
    root = np.sqrt(s[:k])
    return LowRankFactor(qu @ (w[:, :k] * root), qv @ (zh[:k].T * root))


def sym_compress(sym, tol_rel):
    """Symmetric retruncation: eigenvalues |lam_i| <= tol_rel * |lam|_max drop."""
    if sym.rank == 0:
        return SymLowRank(sym.basis.copy(), sym.core.copy())
    q, r = np.linalg.qr(sym.basis)
    lam, vec = np.linalg.eigh((r * sym.core) @ r.T)
    top = np.abs(lam).max(initial=0.0)
    if top == 0.0:
        return SymLowRank.zero(sym.basis.shape[0])
    keep = np.abs(lam) > tol_rel * top
    order = np.argsort(-np.abs(lam[keep]))
    lam = lam[keep][order]
    vec = vec[:, keep][:, order]
    return SymLowRank(q @ vec, lam)


def assemble_rhs(delta_a, delta_b, delta_c, x0, n, m):
    """Right-hand side of the correction equation as a low-rank factor.

    Parameters are the perturbation factors (LowRankFactor or None for zero)
    and the base solution ``x0`` (ndarray, structured matrix with
    matvec/rmatvec, or None for zero). Returns U V^T with

        U = [U_C, -U_A, -X0 U_B],   V = [V_C, X0^T V_A, V_B].
    """
    if delta_a is not None and delta_a.shape != (n, n):
        raise DimensionMismatch(f"dA must act on R^{n}")
    if delta_b is not None and delta_b.shape != (m, m):
        raise DimensionMismatch(f"dB must act on R^{m}")
    if delta_c is not None and delta_c.shape != (n, m):
        raise DimensionMismatch(f"dC must be {n} x {m}")

    u_c = delta_c.left if delta_c is not None else _empty(n)
    v_c = delta_c.right if delta_c is not None else _empty(m)
    u_a = delta_a.left if delta_a is not None else _empty(n)
    v_a = delta_a.right if delta_a is not None else _empty(n)
    u_b = delta_b.left if delta_b is not None else _empty(m)
    v_b = delta_b.right if delta_b is not None else _empty(m)

    x0_ub = _matvec(x0, u_b) if u_b.shape[1] else _empty(n)
    x0t_va = _rmatvec(x0, v_a) if v_a.shape[1] else _empty(m)

    u = np.hstack([u_c, -u_a, -x0_ub])
    v = np.hstack([v_c, x0t_va, v_b])
    return LowRankFactor(u, v)


def split_indefinite(u_a, v_a, u_c, sigma_c, x0, tol_rel=1e-14):
    """Split dC - dA X0 - X0 dA^T into definite parts U1 U1^T - U2 U2^T.

    ``dA = u_a @ v_a.T`` and ``dC = u_c @ diag(sigma_c) @ u_c.T``; ``x0`` is
    the symmetric base solution (ndarray / structured / None). Eigenvalues of
    the assembled core with |lam| <= tol_rel * |lam|_max are dropped.
    """
    u_a = np.atleast_2d(np.asarray(u_a, dtype=float))
    v_a = np.atleast_2d(np.asarray(v_a, dtype=float))
    u_c = np.atleast_2d(np.asarray(u_c, dtype=float))
    sigma_c = np.asarray(sigma_c, dtype=float).reshape(-1)
    if u_a.shape != v_a.shape:
        raise DimensionMismatch("dA factors must have matching shapes")
    if u_c.shape[1] != sigma_c.size:
        raise DimensionMismatch("dC basis/core sizes differ")

    n = max(u_a.shape[0], u_c.shape[0])
    ra, rc = u_a.shape[1], sigma_c.size
    x0_va = _matvec(x0, v_a) if ra else _empty(n)

    u_tilde = np.hstack([u_c, u_a, x0_va])
    core = np.zeros((rc + 2 * ra, rc + 2 * ra))
    core[:rc, :rc] = np.diag(sigma_c)
    core[rc:rc + ra, rc + ra:] = -np.eye(ra)
    core[rc + ra:, rc:rc + ra] = -np.eye(ra)

    if u_tilde.shape[1] == 0:
        return _empty(n), _empty(n)
    q, r = np.linalg.qr(u_tilde)
    lam, vec = np.linalg.eigh(r @ core @ r.T)
    top = np.abs(lam).max(initial=0.0)
    if top == 0.0:
        return _empty(n), _empty(n)
    keep = np.abs(lam) > tol_rel * top
    lam, vec = lam[keep], vec[:, keep]
    pos, neg = lam > 0, lam < 0
    u1 = q @ (vec[:, pos] * np.sqrt(lam[pos]))
    u2 = q @ (vec[:, neg] * np.sqrt(-lam[neg]))
    return u1, u2
