"""HODLR matrices over a balanced cluster tree.

A HODLR matrix stores the diagonal blocks of the leaf level densely and every
off-diagonal block (sibling pair, all levels) as a low-rank outer product
U V^T. The module provides construction from dense or banded input, matvec,
formatted addition, low-rank updates, a block LU factorization whose solves
plug directly into the extended Krylov OperatorHandle protocol, and the
one-level splitting H = blkdiag(H11, H22) + U V^T that drives
divide-and-conquer.
"""

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse

from .dense import matrix_two_norm_estimate, two_norm_estimate
from .errors import (
    BandTooWide,
    DimensionMismatch,
    LeafMatrix,
    NumericallySingular,
    TreeMismatch,
)
from .lowrank import LowRankFactor

RSVD_MIN = 384  # blocks at least this large use the randomized range finder
_RSVD_SEED = 0xB10C


@dataclass(frozen=True)
class ClusterTree:
    """Balanced binary partition of an index range of size n.

    ``children`` is empty for a leaf, else a (left, right) pair whose sizes
    sum to n. Level ell splits the range into 2^ell consecutive intervals.
    """

    n: int
    children: tuple = ()

    @property
    def is_leaf(self):
        return not self.children

    @property
    def depth(self):
        return 0 if self.is_leaf else 1 + self.children[0].depth

    def leaf_sizes(self):
        if self.is_leaf:
            return (self.n,)
        return self.children[0].leaf_sizes() + self.children[1].leaf_sizes()

    def intervals(self, level):
        """The index intervals [start, stop) of the given level."""
        if level == 0 or self.is_leaf:
            return [(0, self.n)]
        left, right = self.children
        shifted = [(a + left.n, b + left.n) for a, b in right.intervals(level - 1)]
        return left.intervals(level - 1) + shifted

    def compatible(self, other):
        return self.leaf_sizes() == other.leaf_sizes()


def tree_build(n, leaf_size):
    """Balanced cluster tree: depth max(0, ceil(log2(n / leaf_size))).

    All leaf sizes differ by at most one.
    """
    if n < 1 or leaf_size < 1:
        raise ValueError("n and leaf_size must be positive")
    chunks = -(-n // leaf_size)
    p = (chunks - 1).bit_length()
    base, extra = divmod(n, 2 ** p)
    sizes = [base + (1 if i < extra else 0) for i in range(2 ** p)]

    def build(lo, hi):
        if hi - lo == 1:
            return ClusterTree(sizes[lo])
        mid = (lo + hi) // 2
        left, right = build(lo, mid), build(mid, hi)
        return ClusterTree(left.n + right.n, (left, right))

    return build(0, len(sizes))


class HodlrMatrix:
    """Recursive HODLR node: dense leaf or two children plus coupling factors.

    ``a12 = u12 @ v12.T`` and ``a21 = u21 @ v21.T`` are the off-diagonal
    blocks at this level. Instances are immutable by convention; arithmetic
    returns new matrices.
    """

    __slots__ = ("tree", "d", "a11", "a22", "u12", "v12", "u21", "v21")

    def __init__(self, tree, d=None, a11=None, a22=None,
                 u12=None, v12=None, u21=None, v21=None):
        self.tree = tree
        self.d = d
        self.a11 = a11
        self.a22 = a22
        self.u12 = u12
        self.v12 = v12
        self.u21 = u21
        self.v21 = v21

    @property
    def n(self):
        return self.tree.n

    @property
    def shape(self):
        return (self.tree.n, self.tree.n)

    @property
    def is_leaf(self):
        return self.d is not None

    def to_dense(self):
        if self.is_leaf:
            return self.d.copy()
        out = np.zeros((self.n, self.n))
        n1 = self.a11.n
        out[:n1, :n1] = self.a11.to_dense()
        out[n1:, n1:] = self.a22.to_dense()
        out[:n1, n1:] = self.u12 @ self.v12.T
        out[n1:, :n1] = self.u21 @ self.v21.T
        return out

    def matvec(self, w):
        if w.shape[0] != self.n:
            raise DimensionMismatch(f"operand has {w.shape[0]} rows, need {self.n}")
        if self.is_leaf:
            return self.d @ w
        n1 = self.a11.n
        w1, w2 = w[:n1], w[n1:]
        top = self.a11.matvec(w1) + self.u12 @ (self.v12.T @ w2)
        bot = self.a22.matvec(w2) + self.u21 @ (self.v21.T @ w1)
        return np.concatenate([top, bot])

    def rmatvec(self, w):
        if w.shape[0] != self.n:
            raise DimensionMismatch(f"operand has {w.shape[0]} rows, need {self.n}")
        if self.is_leaf:
            return self.d.T @ w
        n1 = self.a11.n
        w1, w2 = w[:n1], w[n1:]
        top = self.a11.rmatvec(w1) + self.v21 @ (self.u21.T @ w2)
        bot = self.a22.rmatvec(w2) + self.v12 @ (self.u12.T @ w1)
        return np.concatenate([top, bot])

    def rank(self):
        """Largest stored off-diagonal rank over all levels."""
        if self.is_leaf:
            return 0
        own = max(self.u12.shape[1], self.u21.shape[1])
        return max(own, self.a11.rank(), self.a22.rank())

    def memory_bytes(self):
        if self.is_leaf:
            return self.d.nbytes
        off = self.u12.nbytes + self.v12.nbytes + self.u21.nbytes + self.v21.nbytes
        return off + self.a11.memory_bytes() + self.a22.memory_bytes()

    def norm_est(self):
        return two_norm_estimate(self.matvec, self.rmatvec, self.n)


def _trim(u, v, tau):
    """Retruncate an outer product at absolute spectral threshold tau."""
    if u.shape[1] == 0:
        return u, v
    qu, ru = np.linalg.qr(u)
    qv, rv = np.linalg.qr(v)
    w, sig, zh = np.linalg.svd(ru @ rv.T)
    k = int(np.count_nonzero(sig > tau))
    root = np.sqrt(sig[:k])
    return qu @ (w[:, :k] * root), qv @ (zh[:k].T * root)


def _lowrank_block(block, tau):
    """Factor a dense block keeping singular values above tau (absolute)."""
    m, n = block.shape
    if min(m, n) <= RSVD_MIN:
        w, sig, zh = np.linalg.svd(block, full_matrices=False)
        k = int(np.count_nonzero(sig > tau))
        root = np.sqrt(sig[:k])
        return w[:, :k] * root, zh[:k].T * root
    rng = np.random.default_rng(_RSVD_SEED)
    k = 32
    while True:
        probe = rng.standard_normal((n, min(k + 8, n)))
        sample = block @ probe
        sample = block @ (block.T @ sample)  # one power pass sharpens the range
        q = np.linalg.qr(sample)[0]
        core = q.T @ block
        w, sig, zh = np.linalg.svd(core, full_matrices=False)
        if q.shape[1] >= min(m, n) or (sig.size and sig[-1] <= 0.5 * tau):
            break
        k *= 2
    keep = int(np.count_nonzero(sig > tau))
    root = np.sqrt(sig[:keep])
    return q @ (w[:, :keep] * root), zh[:keep].T * root


def hodlr_from_dense(m, tree, tol_rel):
    """Compress a dense square matrix; off-diagonal blocks truncated at
    tol_rel times the estimated 2-norm of the whole matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {m.shape}")
    if m.shape[0] != tree.n:
        raise DimensionMismatch(f"matrix size {m.shape[0]} does not match tree {tree.n}")
    tau = tol_rel * matrix_two_norm_estimate(m)

    def build(view, node):
        if node.is_leaf:
            return HodlrMatrix(node, d=np.array(view, dtype=float))
        n1 = node.children[0].n
        u12, v12 = _lowrank_block(view[:n1, n1:], tau)
        u21, v21 = _lowrank_block(view[n1:, :n1], tau)
        return HodlrMatrix(node,
                           a11=build(view[:n1, :n1], node.children[0]),
                           a22=build(view[n1:, n1:], node.children[1]),
                           u12=u12, v12=v12, u21=u21, v21=v21)

    return build(m, tree)


def hodlr_from_banded(s, tree):
    """Exact HODLR representation of a banded matrix.

    Off-diagonal blocks of a matrix with bandwidth b live in a b x b corner,
    so factors have exactly b columns. Requires b at most the smallest leaf.
    """
    s = scipy.sparse.csr_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {s.shape}")
    if s.shape[0] != tree.n:
        raise DimensionMismatch(f"matrix size {s.shape[0]} does not match tree {tree.n}")
    coo = s.tocoo()
    band = int(np.abs(coo.row - coo.col).max(initial=0))
    smallest = min(tree.leaf_sizes())
    if band > smallest:
        raise BandTooWide(f"bandwidth {band} exceeds smallest leaf {smallest}")

    def build(block, node):
        if node.is_leaf:
            return HodlrMatrix(node, d=block.toarray())
        n1 = node.children[0].n
        n2 = node.n - n1
        b = band
        u12 = np.zeros((n1, b))
        v12 = np.zeros((n2, b))
        u12[n1 - b:, :] = block[n1 - b:n1, n1:n1 + b].toarray()
        v12[:b, :] = np.eye(b)
        u21 = np.zeros((n2, b))
        v21 = np.zeros((n1, b))
        u21[:b, :] = block[n1:n1 + b, n1 - b:n1].toarray()
        v21[n1 - b:, :] = np.eye(b)
        return HodlrMatrix(node,
                           a11=build(block[:n1, :n1], node.children[0]),
                           a22=build(block[n1:, n1:], node.children[1]),
                           u12=u12, v12=v12, u21=u21, v21=v21)

    return build(s, tree)


def hodlr_matvec(h, w):
    return h.matvec(w)


def hodlr_split(h):
    """One-level split H = blkdiag(H11, H22) + U V^T.

    U carries [u12; 0] and [0; u21] columns, V the matching [0; v12] and
    [v21; 0] columns, so U and V have k12 + k21 columns each.
    """
    if h.is_leaf:
        raise LeafMatrix("depth-0 HODLR matrix cannot be split")
    n1, n2 = h.a11.n, h.a22.n
    k12, k21 = h.u12.shape[1], h.u21.shape[1]
    u = np.zeros((h.n, k12 + k21))
    v = np.zeros((h.n, k12 + k21))
    u[:n1, :k12] = h.u12
    u[n1:, k12:] = h.u21
    v[n1:, :k12] = h.v12
    v[:n1, k12:] = h.v21
    return h.a11, h.a22, u, v


def _check_trees(h1, h2):
    if not h1.tree.compatible(h2.tree):
        raise TreeMismatch("HODLR operands have different cluster trees")


def _add(h1, h2, tau):
    if h1.is_leaf:
        return HodlrMatrix(h1.tree, d=h1.d + h2.d)
    u12, v12 = _trim(np.hstack([h1.u12, h2.u12]), np.hstack([h1.v12, h2.v12]), tau)
    u21, v21 = _trim(np.hstack([h1.u21, h2.u21]), np.hstack([h1.v21, h2.v21]), tau)
    return HodlrMatrix(h1.tree,
                       a11=_add(h1.a11, h2.a11, tau),
                       a22=_add(h1.a22, h2.a22, tau),
                       u12=u12, v12=v12, u21=u21, v21=v21)


def hodlr_add_compress(h1, h2, tol_rel):
    """Formatted sum with per-block retruncation at tol_rel times the
    estimated norm scale of the operands.

    The scale is est(h1) + est(h2), not the norm of the sum: adding H and -H
    must collapse to all-zero ranks rather than retain rounding noise."""
    _check_trees(h1, h2)
    est = h1.norm_est() + h2.norm_est()
    return _add(h1, h2, tol_rel * est)


def _axpy(h, u, v, tau):
    if h.is_leaf:
        return HodlrMatrix(h.tree, d=h.d + u @ v.T)
    n1 = h.a11.n
    u12, v12 = _trim(np.hstack([h.u12, u[:n1]]), np.hstack([h.v12, v[n1:]]), tau)
    u21, v21 = _trim(np.hstack([h.u21, u[n1:]]), np.hstack([h.v21, v[:n1]]), tau)
    return HodlrMatrix(h.tree,
                       a11=_axpy(h.a11, u[:n1], v[:n1], tau),
                       a22=_axpy(h.a22, u[n1:], v[n1:], tau),
                       u12=u12, v12=v12, u21=u21, v21=v21)


def hodlr_axpy_lowrank(h, fac, tol_rel):
    """H + fac.left @ fac.right^T in HODLR form, retruncated at tol_rel
    relative to the estimated norm of the result. tol_rel = 0 keeps every
    nonzero singular value (exact update up to rounding)."""
    if fac.left.shape[0] != h.n or fac.right.shape[0] != h.n:
        raise DimensionMismatch("low-rank update does not match matrix size")
    if fac.rank == 0:
        return h
    tau = 0.0 if tol_rel == 0.0 else tol_rel * (h.norm_est() + fac.norm2())
    return _axpy(h, fac.left, fac.right, tau)


def _sym_axpy(h, w, s, tau):
    if h.is_leaf:
        d = h.d + (w * s) @ w.T
        return HodlrMatrix(h.tree, d=(d + d.T) / 2.0)
    n1 = h.a11.n
    u12, v12 = _trim(np.hstack([h.u12, w[:n1] * s]), np.hstack([h.v12, w[n1:]]), tau)
    return HodlrMatrix(h.tree,
                       a11=_sym_axpy(h.a11, w[:n1], s, tau),
                       a22=_sym_axpy(h.a22, w[n1:], s, tau),
                       u12=u12, v12=v12, u21=v12, v21=u12)


def hodlr_sym_axpy(h, sym, tol_rel):
    """H + basis diag(core) basis^T for symmetric H, with mirrored factors.

    The (2,1) factors of the result alias the trimmed (1,2) pair, so
    its dense form is exactly symmetric provided H itself was assembled
    the same way (H's own (2,1) factors are ignored)."""
    if sym.basis.shape[0] != h.n:
        raise DimensionMismatch("symmetric update does not match matrix size")
    if sym.rank == 0:
        return h
    tau = 0.0 if tol_rel == 0.0 else tol_rel * (h.norm_est() + sym.norm2())
    return _sym_axpy(h, sym.basis, sym.core, tau)


def hodlr_blkdiag(h1, h2):
    """Block-diagonal HODLR matrix with empty off-diagonal factors."""
    tree = ClusterTree(h1.n + h2.n, (h1.tree, h2.tree))
    return HodlrMatrix(tree, a11=h1, a22=h2,
                       u12=np.zeros((h1.n, 0)), v12=np.zeros((h2.n, 0)),
                       u21=np.zeros((h2.n, 0)), v21=np.zeros((h1.n, 0)))


class HodlrLU:
    """Block LU of a HODLR matrix.

    Leaves hold dense LU factors. Internal nodes factor H11, form the Schur
    complement S = H22 - U21 (V21^T H11^{-1} U12) V12^T as a compressed
    low-rank update of H22, and keep the solves Y = H11^{-1} U12 and
    Yt = H11^{-T} V21 so each solve needs one pass per factor.
    """

    __slots__ = ("n", "lu", "piv", "f11", "f22", "y", "yt",
                 "u12", "v12", "u21", "v21", "n1")

    def solve(self, w):
        if self.lu is not None:
            return scipy.linalg.lu_solve((self.lu, self.piv), w, check_finite=False)
        w1, w2 = w[:self.n1], w[self.n1:]
        y1 = self.f11.solve(w1)
        x2 = self.f22.solve(w2 - self.u21 @ (self.v21.T @ y1))
        x1 = y1 - self.y @ (self.v12.T @ x2)
        return np.concatenate([x1, x2])

    def solve_t(self, w):
        if self.lu is not None:
            return scipy.linalg.lu_solve((self.lu, self.piv), w, trans=1,
                                         check_finite=False)
        w1, w2 = w[:self.n1], w[self.n1:]
        y1 = self.f11.solve_t(w1)
        x2 = self.f22.solve_t(w2 - self.v12 @ (self.u12.T @ y1))
        x1 = y1 - self.yt @ (self.u21.T @ x2)
        return np.concatenate([x1, x2])


def hodlr_lu(h, tol_rel=1e-14):
    """Factor a HODLR matrix; Schur complements are recompressed at tol_rel
    relative to the estimated norm of the input matrix."""
    tau = tol_rel * h.norm_est() if not h.is_leaf else 0.0

    def factor(node):
        f = HodlrLU.__new__(HodlrLU)
        f.n = node.n
        if node.is_leaf:
            with warnings.catch_warnings():
                # singularity is detected below from the U diagonal
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                f.lu, f.piv = scipy.linalg.lu_factor(node.d, check_finite=False)
            diag = np.abs(np.diag(f.lu))
            if diag.min(initial=np.inf) <= node.n * np.finfo(float).eps * diag.max(initial=0.0):
                raise NumericallySingular("HODLR leaf block is numerically singular")
            f.f11 = f.f22 = f.y = f.yt = None
            f.u12 = f.v12 = f.u21 = f.v21 = None
            f.n1 = 0
            return f
        f.lu = f.piv = None
        f.n1 = node.a11.n
        f.u12, f.v12 = node.u12, node.v12
        f.u21, f.v21 = node.u21, node.v21
        f.f11 = factor(node.a11)
        f.y = f.f11.solve(node.u12)
        f.yt = f.f11.solve_t(node.v21)
        core = node.v21.T @ f.y
        schur = _axpy(node.a22, -(node.u21 @ core), node.v12, tau)
        f.f22 = factor(schur)
        return f

    return factor(h)


def hodlr_lu_solve(h, tol_rel=1e-14):
    """OperatorHandle whose solves run through the HODLR block LU."""
    from .krylov import OperatorHandle

    f = hodlr_lu(h, tol_rel)
    return OperatorHandle(h.n, h.matvec, h.rmatvec, f.solve, f.solve_t)
