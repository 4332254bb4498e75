"""HSS matrices: hierarchical low rank with nested bases.

The format stores dense leaf diagonal blocks, per-leaf row/column bases, and
for every internal node the translation operators that lift child bases to
the parent plus the sibling coupling matrices. Storage is O(kn) instead of
the O(kn log n) of the HODLR format.

Construction goes through exact "lifts" (from dense input or from a HODLR
matrix) followed by a two-phase recompression: a bottom-up pass makes all
bases orthonormal, then a top-down pass truncates each basis against the
aggregated weight of every coupling that uses it. With orthonormal bases the
weight singular values equal the singular values of the corresponding HSS
block row/column, so truncation at an absolute threshold tau discards at
most tau per block row and the total error obeys the sqrt(2^(p+2) - 4)
cascade bound.

Also here: the rank-k Hermitian splitting of an SPD matrix, its theta
variant for right-hand sides, the Kronecker lift A ox B for small B, and the
perfect shuffle permutation used to turn companion-form block matrices into
genuine HSS matrices.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dense import matrix_two_norm_estimate, two_norm_estimate
from .errors import (
    DimensionMismatch,
    LeafMatrix,
    NotDefinite,
    ThetaZero,
    TreeMismatch,
)
from .hodlr import ClusterTree, HodlrMatrix
from .lowrank import LowRankFactor


@dataclass
class HssMatrix:
    """Recursive HSS node.

    Leaf: dense block ``d`` plus row basis ``u`` and column basis ``v``.
    Internal: children ``a11``/``a22``, translations ``ru1, ru2, rv1, rv2``
    (child top basis -> this node's top basis), couplings ``s12, s21`` with
    A12 = U1 s12 V2^T in the children's top bases. The ``symmetric`` flag
    makes the node represent (S + S^T)/2 of its stored value.

    Nodes are treated as immutable once returned by a public constructor;
    builders mutate only freshly created structures.
    """

    tree: ClusterTree
    d: np.ndarray = None
    u: np.ndarray = None
    v: np.ndarray = None
    a11: "HssMatrix" = None
    a22: "HssMatrix" = None
    ru1: np.ndarray = None
    ru2: np.ndarray = None
    rv1: np.ndarray = None
    rv2: np.ndarray = None
    s12: np.ndarray = None
    s21: np.ndarray = None
    symmetric: bool = field(default=False)

    @property
    def n(self):
        return self.tree.n

    @property
    def shape(self):
        return (self.tree.n, self.tree.n)

    @property
    def is_leaf(self):
        return self.d is not None

    @property
    def ku(self):
        return self.u.shape[1] if self.is_leaf else self.ru1.shape[1]

    @property
    def kv(self):
        return self.v.shape[1] if self.is_leaf else self.rv1.shape[1]

    def matvec(self, w):
        return self._apply(w, trans=False)

    def rmatvec(self, w):
        return self._apply(w, trans=True)

    def _apply(self, w, trans):
        if w.shape[0] != self.n:
            raise DimensionMismatch(f"operand has {w.shape[0]} rows, need {self.n}")
        single = w.ndim == 1
        wb = w[:, None] if single else w
        if self.symmetric:
            out = 0.5 * (_sweep(self, wb, False) + _sweep(self, wb, True))
        else:
            out = _sweep(self, wb, trans)
        return out[:, 0] if single else out

    def to_dense(self):
        m = _dense(self)
        return (m + m.T) / 2.0 if self.symmetric else m

    def rank(self):
        """Largest basis width below the root: the measured HSS rank."""
        return _rank(self, is_root=True)

    def memory_bytes(self):
        arrays = (self.d, self.u, self.v, self.ru1, self.ru2,
                  self.rv1, self.rv2, self.s12, self.s21)
        own = sum(a.nbytes for a in arrays if a is not None)
        if self.is_leaf:
            return own
        return own + self.a11.memory_bytes() + self.a22.memory_bytes()

    def norm_est(self):
        return two_norm_estimate(self.matvec, self.rmatvec, self.n)


def _rank(node, is_root):
    own = 0 if is_root else max(node.ku, node.kv)
    if node.is_leaf:
        return own
    return max(own, _rank(node.a11, False), _rank(node.a22, False))


def _basis(node, side):
    """Materialize the node's top row ('u') or column ('v') basis densely."""
    if node.is_leaf:
        return node.u if side == "u" else node.v
    if side == "u":
        top = _basis(node.a11, "u") @ node.ru1
        bot = _basis(node.a22, "u") @ node.ru2
    else:
        top = _basis(node.a11, "v") @ node.rv1
        bot = _basis(node.a22, "v") @ node.rv2
    return np.vstack([top, bot])


def _dense(node):
    if node.is_leaf:
        return node.d.copy()
    out = np.zeros((node.n, node.n))
    n1 = node.a11.n
    out[:n1, :n1] = _dense(node.a11)
    out[n1:, n1:] = _dense(node.a22)
    out[:n1, n1:] = _basis(node.a11, "u") @ node.s12 @ _basis(node.a22, "v").T
    out[n1:, :n1] = _basis(node.a22, "u") @ node.s21 @ _basis(node.a11, "v").T
    return out


def _collect(node, w, trans):
    """Up-sweep: (vhat, child collections, w) with vhat = V_node^T w."""
    if node.is_leaf:
        v = node.u if trans else node.v
        return (v.T @ w, None, None, w)
    n1 = node.a11.n
    c1 = _collect(node.a11, w[:n1], trans)
    c2 = _collect(node.a22, w[n1:], trans)
    rv1, rv2 = (node.ru1, node.ru2) if trans else (node.rv1, node.rv2)
    return (rv1.T @ c1[0] + rv2.T @ c2[0], c1, c2, w)


def _distribute(node, coll, g, trans):
    """Down-sweep: g is the coupling inflow in the node's row basis."""
    if node.is_leaf:
        d = node.d.T if trans else node.d
        u = node.v if trans else node.u
        return d @ coll[3] + u @ g
    s12, s21 = (node.s21.T, node.s12.T) if trans else (node.s12, node.s21)
    ru1, ru2 = (node.rv1, node.rv2) if trans else (node.ru1, node.ru2)
    _, c1, c2, _ = coll
    g1 = s12 @ c2[0] + ru1 @ g
    g2 = s21 @ c1[0] + ru2 @ g
    return np.concatenate([
        _distribute(node.a11, c1, g1, trans),
        _distribute(node.a22, c2, g2, trans),
    ])


def _sweep(node, w, trans):
    coll = _collect(node, w, trans)
    k = node.kv if trans else node.ku
    return _distribute(node, coll, np.zeros((k, w.shape[1])), trans)


def hss_matvec(h, w):
    return h.matvec(w)


# ---------------------------------------------------------------------------
# exact lifts


def _lift_dense(m, node, lo):
    n = node.n
    if node.is_leaf:
        return HssMatrix(node, d=np.array(m[lo:lo + n, lo:lo + n]),
                         u=np.eye(n), v=np.eye(n))
    n1 = node.children[0].n
    eye = np.eye(n)
    return HssMatrix(
        node,
        a11=_lift_dense(m, node.children[0], lo),
        a22=_lift_dense(m, node.children[1], lo + n1),
        ru1=eye[:n1, :], ru2=eye[n1:, :], rv1=eye[:n1, :], rv2=eye[n1:, :],
        s12=np.array(m[lo:lo + n1, lo + n1:lo + n]),
        s21=np.array(m[lo + n1:lo + n, lo:lo + n1]),
    )


def _lift_hodlr(h, prow, qcol):
    if h.is_leaf:
        return HssMatrix(h.tree, d=h.d.copy(), u=prow, v=qcol)
    n1 = h.a11.n
    k12, k21 = h.u12.shape[1], h.u21.shape[1]
    tu, tv = prow.shape[1], qcol.shape[1]
    c1 = _lift_hodlr(h.a11, np.hstack([h.u12, prow[:n1]]),
                     np.hstack([h.v21, qcol[:n1]]))
    c2 = _lift_hodlr(h.a22, np.hstack([h.u21, prow[n1:]]),
                     np.hstack([h.v12, qcol[n1:]]))
    s12 = np.zeros((k12 + tu, k12 + tv))
    s12[:k12, :k12] = np.eye(k12)
    s21 = np.zeros((k21 + tu, k21 + tv))
    s21[:k21, :k21] = np.eye(k21)
    return HssMatrix(
        h.tree, a11=c1, a22=c2, s12=s12, s21=s21,
        ru1=np.vstack([np.zeros((k12, tu)), np.eye(tu)]),
        ru2=np.vstack([np.zeros((k21, tu)), np.eye(tu)]),
        rv1=np.vstack([np.zeros((k21, tv)), np.eye(tv)]),
        rv2=np.vstack([np.zeros((k12, tv)), np.eye(tv)]),
    )


# ---------------------------------------------------------------------------
# recompression


def _qr(a):
    return np.linalg.qr(a)


def _orthonormalize(node):
    """Bottom-up: make every basis orthonormal, folding the triangular
    factors into couplings and translations. Returns (r_u, r_v) mapping the
    node's old top basis to the new one."""
    if node.is_leaf:
        node.u, r_u = _qr(node.u)
        node.v, r_v = _qr(node.v)
        return r_u, r_v
    a_ru, a_rv = _orthonormalize(node.a11)
    b_ru, b_rv = _orthonormalize(node.a22)
    node.s12 = a_ru @ node.s12 @ b_rv.T
    node.s21 = b_ru @ node.s21 @ a_rv.T
    node.ru1 = a_ru @ node.ru1
    node.ru2 = b_ru @ node.ru2
    node.rv1 = a_rv @ node.rv1
    node.rv2 = b_rv @ node.rv2
    ka = node.ru1.shape[0]
    qu, r_u = _qr(np.vstack([node.ru1, node.ru2]))
    node.ru1, node.ru2 = qu[:ka], qu[ka:]
    kav = node.rv1.shape[0]
    qv, r_v = _qr(np.vstack([node.rv1, node.rv2]))
    node.rv1, node.rv2 = qv[:kav], qv[kav:]
    return r_u, r_v


def _weight_trim(w, tau):
    """Projector onto the dominant left singular subspace of the weight
    matrix, cutting at absolute threshold tau; also the compacted weight."""
    if w.shape[0] == 0 or w.shape[1] == 0:
        return np.zeros((w.shape[0], 0)), np.zeros((0, 0))
    p, sig, _ = np.linalg.svd(w, full_matrices=False)
    k = int(np.count_nonzero(sig > tau))
    return p[:, :k], np.diag(sig[:k])


def _truncate(node, pu, pv, wu, wv, tau):
    if node.is_leaf:
        node.u = node.u @ pu
        node.v = node.v @ pv
        return
    node.ru1 = node.ru1 @ pu
    node.ru2 = node.ru2 @ pu
    node.rv1 = node.rv1 @ pv
    node.rv2 = node.rv2 @ pv
    p1, wu1 = _weight_trim(np.hstack([node.s12, node.ru1 @ wu]), tau)
    q1, wv1 = _weight_trim(np.hstack([node.s21.T, node.rv1 @ wv]), tau)
    p2, wu2 = _weight_trim(np.hstack([node.s21, node.ru2 @ wu]), tau)
    q2, wv2 = _weight_trim(np.hstack([node.s12.T, node.rv2 @ wv]), tau)
    node.s12 = p1.T @ node.s12 @ q2
    node.s21 = p2.T @ node.s21 @ q1
    # rewrite the translations in the children's trimmed coordinates
    node.ru1 = p1.T @ node.ru1
    node.ru2 = p2.T @ node.ru2
    node.rv1 = q1.T @ node.rv1
    node.rv2 = q2.T @ node.rv2
    _truncate(node.a11, p1, q1, wu1, wv1, tau)
    _truncate(node.a22, p2, q2, wu2, wv2, tau)


def _recompress(h, tau):
    """Orthonormalize then truncate in place; the root basis is dropped."""
    _orthonormalize(h)
    if not h.is_leaf:
        _truncate(h, np.zeros((h.ku, 0)), np.zeros((h.kv, 0)),
                  np.zeros((0, 0)), np.zeros((0, 0)), tau)
    else:
        h.u = np.zeros((h.n, 0))
        h.v = np.zeros((h.n, 0))
    return h


def hss_compress(m, tree=None, tol_rel=1e-12):
    """Compress a dense matrix or a HODLR matrix into HSS form.

    Truncation happens at tol_rel relative to the estimated 2-norm of the
    input; the reconstruction error is bounded by sqrt(2^(p+2) - 4) times
    the absolute threshold.
    """
    if isinstance(m, HodlrMatrix):
        if tree is not None and not tree.compatible(m.tree):
            raise TreeMismatch("requested tree does not match the HODLR tree")
        tau = tol_rel * m.norm_est()
        lifted = _lift_hodlr(m, np.zeros((m.n, 0)), np.zeros((m.n, 0)))
        return _recompress(lifted, tau)
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {m.shape}")
    if tree is None:
        raise ValueError("a cluster tree is required for dense input")
    if m.shape[0] != tree.n:
        raise DimensionMismatch(f"matrix size {m.shape[0]} does not match tree {tree.n}")
    tau = tol_rel * matrix_two_norm_estimate(m)
    return _recompress(_lift_dense(m, tree, 0), tau)


# ---------------------------------------------------------------------------
# arithmetic


def hss_scale(h, alpha):
    """alpha * H; bases and translations are shared, not copied."""
    if h.is_leaf:
        return HssMatrix(h.tree, d=alpha * h.d, u=h.u, v=h.v,
                         symmetric=h.symmetric)
    return HssMatrix(h.tree, a11=hss_scale(h.a11, alpha),
                     a22=hss_scale(h.a22, alpha),
                     ru1=h.ru1, ru2=h.ru2, rv1=h.rv1, rv2=h.rv2,
                     s12=alpha * h.s12, s21=alpha * h.s21,
                     symmetric=h.symmetric)


def _pad_add(h1, h2):
    if h1.is_leaf:
        return HssMatrix(h1.tree, d=h1.d + h2.d,
                         u=np.hstack([h1.u, h2.u]),
                         v=np.hstack([h1.v, h2.v]))
    return HssMatrix(
        h1.tree,
        a11=_pad_add(h1.a11, h2.a11), a22=_pad_add(h1.a22, h2.a22),
        ru1=scipy.linalg.block_diag(h1.ru1, h2.ru1),
        ru2=scipy.linalg.block_diag(h1.ru2, h2.ru2),
        rv1=scipy.linalg.block_diag(h1.rv1, h2.rv1),
        rv2=scipy.linalg.block_diag(h1.rv2, h2.rv2),
        s12=scipy.linalg.block_diag(h1.s12, h2.s12),
        s21=scipy.linalg.block_diag(h1.s21, h2.s21),
    )


def hss_add(h1, h2, tol_rel=1e-14):
    """H1 + H2 by exact basis concatenation followed by recompression at
    tol_rel relative to the combined norm scale of the operands."""
    if not h1.tree.compatible(h2.tree):
        raise TreeMismatch("HSS operands have different cluster trees")
    tau = tol_rel * (h1.norm_est() + h2.norm_est())
    return _recompress(_pad_add(h1, h2), tau)


def _pad_sandwich(node, left, core, right):
    """Exact structure for node + left @ core @ right^T."""
    k = left.shape[1]
    if node.is_leaf:
        return HssMatrix(node.tree, d=node.d + left @ core @ right.T,
                         u=np.hstack([node.u, left]),
                         v=np.hstack([node.v, right]))
    n1 = node.a11.n
    c1 = _pad_sandwich(node.a11, left[:n1], core, right[:n1])
    c2 = _pad_sandwich(node.a22, left[n1:], core, right[n1:])
    ku1, ku2 = node.a11.ku, node.a22.ku
    kv1, kv2 = node.a11.kv, node.a22.kv
    s12 = np.zeros((ku1 + k, kv2 + k))
    s12[:ku1, :kv2] = node.s12
    s12[ku1:, kv2:] = core
    s21 = np.zeros((ku2 + k, kv1 + k))
    s21[:ku2, :kv1] = node.s21
    s21[ku2:, kv1:] = core
    return HssMatrix(
        node.tree, a11=c1, a22=c2, s12=s12, s21=s21,
        ru1=scipy.linalg.block_diag(node.ru1, np.eye(k)),
        ru2=scipy.linalg.block_diag(node.ru2, np.eye(k)),
        rv1=scipy.linalg.block_diag(node.rv1, np.eye(k)),
        rv2=scipy.linalg.block_diag(node.rv2, np.eye(k)),
    )


def hss_axpy_sandwich(h, left, core, right, tol_rel=1e-14):
    """H + left @ core @ right^T in HSS form, recompressed at tol_rel
    relative to the combined norm scale."""
    if left.shape[0] != h.n or right.shape[0] != h.n:
        raise DimensionMismatch("update factors do not match matrix size")
    if left.shape[1] == 0:
        return h
    scale = h.norm_est() + np.linalg.norm(left, 2) * np.linalg.norm(core, 2) \
        * np.linalg.norm(right, 2)
    return _recompress(_pad_sandwich(h, left, core, right), tol_rel * scale)


def hss_axpy_lowrank(h, fac, tol_rel=1e-14):
    """H + fac.left @ fac.right^T."""
    return hss_axpy_sandwich(h, fac.left, np.eye(fac.rank), fac.right, tol_rel)


def hss_blkdiag(h1, h2):
    """Block-diagonal HSS matrix from two HSS blocks (zero coupling)."""
    tree = ClusterTree(h1.n + h2.n, (h1.tree, h2.tree))
    return HssMatrix(
        tree, a11=h1, a22=h2,
        ru1=np.zeros((h1.ku, 0)), ru2=np.zeros((h2.ku, 0)),
        rv1=np.zeros((h1.kv, 0)), rv2=np.zeros((h2.kv, 0)),
        s12=np.zeros((h1.ku, h2.kv)), s21=np.zeros((h2.ku, h1.kv)),
    )


def hss_split(h):
    """One-level split H = blkdiag(H11, H22) + U V^T with materialized
    level-1 coupling factors; raises LeafMatrix at depth 0."""
    if h.is_leaf:
        raise LeafMatrix("depth-0 HSS matrix cannot be split")
    u1 = _basis(h.a11, "u") @ h.s12
    v2 = _basis(h.a22, "v")
    u2 = _basis(h.a22, "u") @ h.s21
    v1 = _basis(h.a11, "v")
    n1, n2 = h.a11.n, h.a22.n
    ka, kb = u1.shape[1], u2.shape[1]
    u = np.zeros((h.n, ka + kb))
    v = np.zeros((h.n, ka + kb))
    u[:n1, :ka] = u1
    u[n1:, ka:] = u2
    v[n1:, :ka] = v2
    v[:n1, ka:] = v1
    return h.a11, h.a22, u, v


# ---------------------------------------------------------------------------
# Hermitian splitting


def _level1_svd(h):
    """SVD of the level-1 subdiagonal block A21 = U sigma V^T."""
    qu, r_u = _qr(_basis(h.a22, "u"))
    qv, r_v = _qr(_basis(h.a11, "v"))
    core = r_u @ h.s21 @ r_v.T
    if core.size == 0:
        return np.zeros((h.a22.n, 0)), np.zeros((h.a11.n, 0)), np.zeros(0)
    w, sig, zt = np.linalg.svd(core)
    cut = sig > max(1, h.n) * np.finfo(float).eps * (sig[0] if sig.size else 0.0)
    k = int(np.count_nonzero(cut))
    return qu @ w[:, :k], qv @ zt[:k].T, sig[:k]


def _probe_leaves_spd(node):
    if node.is_leaf:
        try:
            np.linalg.cholesky((node.d + node.d.T) / 2.0)
        except np.linalg.LinAlgError:
            raise NotDefinite("diagonal block is not positive definite") from None
        return
    _probe_leaves_spd(node.a11)
    _probe_leaves_spd(node.a22)


def hss_hermitian_split(h):
    """Rank-k splitting of a Hermitian positive definite HSS matrix.

    With A21 = U sigma V^T the SVD of the level-1 subdiagonal block,
    H = H0 - W diag(sigma) W^T where W = [V; -U] and
    H0 = blkdiag(A11 + V sigma V^T, A22 + U sigma U^T) stays positive
    definite with the same HSS rank bound. Returns (H0, W, sigma).
    """
    if h.is_leaf:
        raise LeafMatrix("depth-0 HSS matrix cannot be split")
    u, v, sig = _level1_svd(h)
    core = np.diag(sig)
    a11 = hss_axpy_sandwich(h.a11, v, core, v, tol_rel=1e-15)
    a22 = hss_axpy_sandwich(h.a22, u, core, u, tol_rel=1e-15)
    h0 = hss_blkdiag(a11, a22)
    h0.tree = h.tree
    _probe_leaves_spd(h0)
    w = np.vstack([v, -u])
    return h0, w, sig


def rhs_theta_split(c, theta):
    """Splitting C = C0 + dC with dC = [theta V; -U] sigma [-V; U/theta]^T.

    No definiteness is required of C0; theta balances the two blocks.
    """
    if theta == 0:
        raise ThetaZero("theta must be nonzero")
    if c.is_leaf:
        raise LeafMatrix("depth-0 HSS matrix cannot be split")
    u, v, sig = _level1_svd(c)
    core = np.diag(sig)
    c11 = hss_axpy_sandwich(c.a11, v, theta * core, v, tol_rel=1e-15)
    c22 = hss_axpy_sandwich(c.a22, u, core / theta, u, tol_rel=1e-15)
    c0 = hss_blkdiag(c11, c22)
    c0.tree = c.tree
    left = np.vstack([theta * v, -u]) * sig
    right = np.vstack([-v, u / theta])
    return c0, LowRankFactor(left, right)


# ---------------------------------------------------------------------------
# Kronecker lift and perfect shuffle


def _scale_tree(tree, m):
    if tree.is_leaf:
        return ClusterTree(tree.n * m)
    return ClusterTree(tree.n * m,
                       tuple(_scale_tree(c, m) for c in tree.children))


def hss_kron_small(a, b):
    """A ox B as an HSS matrix for an HSS A and a small dense B (m <= 8).

    With B = Ub Vb^T of rank k_B, every basis turns into its Kronecker
    product with the B factor and couplings pick up an identity factor, so
    the HSS rank is at most k_A * k_B.
    """
    b = np.asarray(b, dtype=float)
    m = b.shape[0]
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimensionMismatch(f"B must be square, got {b.shape}")
    if m > 8:
        raise ValueError("hss_kron_small expects a small factor (m <= 8)")
    w, sig, zt = np.linalg.svd(b)
    kb = int(np.count_nonzero(sig > m * np.finfo(float).eps * (sig[0] if sig.size else 0.0)))
    ub = w[:, :kb] * sig[:kb]
    vb = zt[:kb].T
    eye = np.eye(kb)

    def lift(node):
        tree = _scale_tree(node.tree, m)
        if node.is_leaf:
            return HssMatrix(tree, d=np.kron(node.d, b),
                             u=np.kron(node.u, ub), v=np.kron(node.v, vb))
        return HssMatrix(
            tree, a11=lift(node.a11), a22=lift(node.a22),
            ru1=np.kron(node.ru1, eye), ru2=np.kron(node.ru2, eye),
            rv1=np.kron(node.rv1, eye), rv2=np.kron(node.rv2, eye),
            s12=np.kron(node.s12, eye), s21=np.kron(node.s21, eye),
        )

    return lift(a)


def hss_identity(tree):
    """The identity matrix in HSS form (all couplings empty)."""
    if tree.is_leaf:
        return HssMatrix(tree, d=np.eye(tree.n),
                         u=np.zeros((tree.n, 0)), v=np.zeros((tree.n, 0)))
    return HssMatrix(
        tree, a11=hss_identity(tree.children[0]),
        a22=hss_identity(tree.children[1]),
        ru1=np.zeros((0, 0)), ru2=np.zeros((0, 0)),
        rv1=np.zeros((0, 0)), rv2=np.zeros((0, 0)),
        s12=np.zeros((0, 0)), s21=np.zeros((0, 0)),
    )


@dataclass(frozen=True)
class PermutationMap:
    """Permutation v -> v[perm]; rows/columns of matrices likewise."""

    perm: np.ndarray

    @property
    def n(self):
        return self.perm.shape[0]

    def apply(self, v):
        return v[self.perm]

    def apply_matrix(self, m):
        return m[np.ix_(self.perm, self.perm)]

    def inverse(self):
        return PermutationMap(np.argsort(self.perm))


def perfect_shuffle(q, m):
    """PermutationMap P with P (X ox Y) P^T = Y ox X for X q x q, Y m x m.

    The map is an involution exactly when q == m; in general its inverse is
    perfect_shuffle(m, q).
    """
    if q < 1 or m < 1:
        raise DimensionMismatch("factor sizes must be positive")
    j = np.arange(q * m)
    return PermutationMap((j % q) * m + j // q)


def build_shuffled_companion(minv_k, minv_l):
    """HSS form of the shuffled second-companion block matrix.

    For A = E21 ox I - E12 ox (M^-1 K) - E22 ox (M^-1 L) over the 2q state
    space, the perfect shuffle turns A into
    I ox E21 - (M^-1 K) ox E12 - (M^-1 L) ox E22, a sum of three Kronecker
    lifts over the doubled cluster tree.
    """
    if not minv_k.tree.compatible(minv_l.tree):
        raise DimensionMismatch("the two coefficient matrices use different trees")
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    e21 = e12.T
    e22 = np.diag([0.0, 1.0])
    acc = hss_kron_small(hss_identity(minv_k.tree), e21)
    acc = hss_add(acc, hss_scale(hss_kron_small(minv_k, e12), -1.0), 1e-15)
    return hss_add(acc, hss_scale(hss_kron_small(minv_l, e22), -1.0), 1e-15)
