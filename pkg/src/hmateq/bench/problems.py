"""Benchmark problem generators.

Each generator returns plain data: sparse coefficients, a dense or sparse
right-hand side, and (for the Riccati families) a low-rank stabilizing
guess. Formatting into HODLR/HSS and the choice of solver happen in the
runner, so one instance can feed every solver configuration.

Kernel-sampled right-hand sides are assembled densely and compressed
downstream, which caps those families at DENSE_RHS_LIMIT; an expansion-based
assembly of the kernel blocks would lift the cap and is an extension point.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from ..equations import SylvesterProblem
from ..hodlr import hodlr_from_banded, tree_build
from ..hss import build_shuffled_companion, hss_compress, hss_identity, perfect_shuffle
from ..lowrank import SymLowRank

PROBLEMS = ("laplace2d", "convdiff", "heat", "riccati_banded",
            "second_order_shuffle", "from_files")

DENSE_RHS_LIMIT = 8192


@dataclass(frozen=True)
class ToleranceProfile:
    """Solver parameters: Newton stop, extended Krylov stop, leaf size,
    and the relative truncation threshold of formatted arithmetic."""

    tol_nw: float = 1e-8
    tol_ek: float = 1e-12
    leaf: int = 256
    tol_sigma: float = 1e-12

    def __post_init__(self):
        if not (self.tol_nw > 0.0 and self.tol_ek > 0.0 and self.tol_sigma > 0.0):
            raise ValueError("tolerances must be positive")
        if self.leaf < 2:
            raise ValueError("leaf must be at least 2")


_PROFILES = {
    "laplace2d": ToleranceProfile(1e-8, 1e-12, 256, 1e-12),
    "convdiff": ToleranceProfile(1e-8, 1e-12, 256, 1e-12),
    # the heat family is well conditioned; loose tolerances suffice
    "heat": ToleranceProfile(1e-8, 1e-6, 256, 1e-6),
    "riccati_banded": ToleranceProfile(1e-8, 1e-12, 256, 1e-12),
    "second_order_shuffle": ToleranceProfile(1e-8, 1e-12, 256, 1e-12),
    # file-based equations run unformatted; only the Krylov stop matters
    "from_files": ToleranceProfile(1e-8, 1e-8, 256, 1e-12),
}


def default_profile(problem):
    """Default solver parameters for a problem family."""
    try:
        return _PROFILES[problem]
    except KeyError:
        raise ValueError(f"unknown problem {problem!r}") from None


@dataclass(frozen=True)
class CareProblem:
    """CARE A X + X A^T - X B_U B_U^T X = C with a stabilizing guess X0.

    ``a`` may be sparse or a formatted matrix; ``a_sparse`` carries a sparse
    mirror when ``a`` is formatted. ``x0`` is None for the zero guess.
    ``shuffle`` records the permutation applied to the original ordering,
    so solutions can be mapped back for comparisons.
    """

    a: object
    b_u: np.ndarray
    c: object
    x0: object = None
    a_sparse: object = None
    shuffle: object = None

    @property
    def n(self):
        return self.b_u.shape[0]


def _dirichlet_laplacian(n):
    """(n+1)^2 trid(-1, 2, -1): second differences on n interior points."""
    return (n + 1) ** 2 * scipy.sparse.diags(
        [-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1],
        format="csr")


def _log_kernel(n):
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    if n > DENSE_RHS_LIMIT:
        raise ValueError(
            f"kernel right-hand sides are assembled densely; n is capped at "
            f"{DENSE_RHS_LIMIT}, got {n}")
    x = np.arange(1, n + 1) / (n + 1)
    return np.log1p(np.abs(x[:, None] - x[None, :]))


def gen_laplace2d(n):
    """Five-point discretization of -Lap(u) = log(1 + |x - y|) on the unit
    square with zero boundary values: A X + X A^T = C with A the scaled
    second-difference matrix and C the source sampled on the interior grid.
    """
    c = _log_kernel(n)
    a = _dirichlet_laplacian(n)
    return SylvesterProblem(a, a.T.tocsr(), c)


def gen_convdiff(n):
    """Convection-diffusion variant of gen_laplace2d with velocity (10, 10).

    The first-order terms add the nonsymmetric band (5/2)(n+1) times the
    pattern [1, 3, -5, 1] (bandwidth 2), so A X + X A^T = C keeps the same
    right-hand side but loses symmetry and normality.
    """
    c = _log_kernel(n)
    w = scipy.sparse.diags(
        [np.ones(n - 1), 3.0 * np.ones(n), -5.0 * np.ones(n - 1), np.ones(n - 2)],
        [-1, 0, 1, 2])
    a = (_dirichlet_laplacian(n) + 2.5 * (n + 1) * w).tocsr()
    return SylvesterProblem(a, a.T.tocsr(), c)


def gen_heat(q):
    """Heat diffusion across q segments of six coupled cells, n = 6q.

    A = I_q (x) trid_6(b, a, b) + trid_q(b, 0, b) (x) I_6 and
    C = I_q (x) (-c E_6 + (c - 1) I_6) + trid_q(d, 0, d) (x) E_6
    with a = -1.36, b = 0.34, c = 0.2, d = 0.1 and E_6 all ones. Both are
    banded (bandwidths 6 and 11) and A is negative definite with condition
    number bounded by 40 uniformly in q.
    """
    if q < 2:
        raise ValueError(f"q must be at least 2, got {q}")
    av, bv, cv, dv = -1.36, 0.34, 0.2, 0.1
    e6 = np.ones((6, 6))
    trid6 = scipy.sparse.diags(
        [bv * np.ones(5), av * np.ones(6), bv * np.ones(5)], [-1, 0, 1])
    couple = scipy.sparse.diags([bv * np.ones(q - 1), bv * np.ones(q - 1)], [-1, 1])
    a = (scipy.sparse.kron(scipy.sparse.identity(q), trid6)
         + scipy.sparse.kron(couple, scipy.sparse.identity(6))).tocsr()
    block = -cv * e6 + (cv - 1.0) * np.eye(6)
    neighbor = scipy.sparse.diags([dv * np.ones(q - 1), dv * np.ones(q - 1)], [-1, 1])
    c = (scipy.sparse.kron(scipy.sparse.identity(q), block)
         + scipy.sparse.kron(neighbor, e6)).tocsr()
    return SylvesterProblem(a, a.T.tocsr(), c)


def gen_riccati_banded(n):
    """A X + X A^T - X B_U B_U^T X = C with A = trid(1, -2, 1), inputs at the
    two chain ends (B_U = [e_1, e_n]) and C = -I. A is negative definite, so
    the zero guess is stabilizing and the first Newton step is the Lyapunov
    equation A X + X A = C with a full-rank right-hand side."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    a = scipy.sparse.diags(
        [np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
        format="csr")
    b_u = np.zeros((n, 2))
    b_u[0, 0] = b_u[-1, 1] = 1.0
    c = -scipy.sparse.identity(n, format="csr")
    return CareProblem(a=a, b_u=b_u, c=c)


def gen_second_order_shuffle(q, leaf=None):
    """Optimal damping of a q-mass chain, shuffled into HSS form.

    The second-order system 4I z'' + 4I z' + K z = D u, with K the free-end
    path Laplacian and inputs at the chain ends, linearizes to a CARE on
    n = 2q states whose companion matrix A = [[0, -K/4], [I, -I]] has
    full-rank off-diagonal blocks. Interleaving the position and velocity of
    each mass (the perfect shuffle of the two Kronecker factors) turns A
    into an HSS matrix of rank at most 2; B_U, C = -I and the stabilizing
    guess X0 = E E^T are permuted to match. ``leaf`` targets the leaf size
    of the doubled (2q) cluster tree.

    C carries a negative sign for the same reason as in gen_riccati_banded:
    with +I the Kleinman iteration has no stabilizing fixed point.
    """
    if q < 2:
        raise ValueError(f"q must be at least 2, got {q}")
    leaf2 = 256 if leaf is None else int(leaf)
    if leaf2 < 4:
        raise ValueError(f"leaf must be at least 4, got {leaf2}")
    leaf_q = max(2, min(leaf2 // 2, q))

    k = scipy.sparse.diags(
        [-np.ones(q - 1), 2.0 * np.ones(q), -np.ones(q - 1)], [-1, 0, 1]).tolil()
    k[0, 0] = k[-1, -1] = 1.0  # free ends
    k = k.tocsr()

    tree = tree_build(q, leaf_q)
    minv_k = hss_compress(hodlr_from_banded(k / 4.0, tree), tol_rel=1e-15)
    a_tilde = build_shuffled_companion(minv_k, hss_identity(tree))

    p = perfect_shuffle(2, q)
    eye_q = scipy.sparse.identity(q, format="csr")
    a_sp = scipy.sparse.bmat([[None, -k / 4.0], [eye_q, -eye_q]], format="csr")
    a_shuf = a_sp[p.perm][:, p.perm].tocsr()

    d = np.zeros((q, 2))
    d[0, 0] = d[-1, 1] = 1.0
    b_u = np.vstack([np.zeros((q, 2)), 0.25 * d])[p.perm]
    e = 2.0 * np.vstack([np.column_stack([-d[:, 1], d[:, 0]])] * 2)
    x0 = SymLowRank(e[p.perm], np.ones(2))
    c = -scipy.sparse.identity(2 * q, format="csr")
    return CareProblem(a=a_tilde, b_u=b_u, c=c, x0=x0, a_sparse=a_shuf, shuffle=p)
