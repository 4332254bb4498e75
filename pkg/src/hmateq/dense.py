"""Dense kernels: Sylvester/Lyapunov solves, the Kronecker oracle, truncated SVD.

These are the desk-scale building blocks everything else reduces to. ``kron_solve``
is deliberately independent of ``dense_sylv`` (plain LU of the Kronecker form) so
the two can cross-check each other in the test suite.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularOperator

# Relative threshold below which a Sylvester operator counts as singular.
SINGULARITY_RTOL = 1e-13

# Seed for the power-method 2-norm estimator (documented: estimates are
# reproducible across runs).
POWER_SEED = 0x5EED

# Relative symmetry slack used when deciding whether the fast symmetric
# eigendecomposition path applies.
_SYM_RTOL = 1e-13


def _as_square(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _is_symmetric(a):
    scale = np.abs(a).max(initial=0.0)
    if scale == 0.0:
        return True
    return np.abs(a - a.T).max() <= _SYM_RTOL * scale


def _quasi_tri_eigvals(t):
    """Eigenvalues of a real quasi-triangular (Schur form) matrix."""
    n = t.shape[0]
    vals = np.empty(n, dtype=complex)
    i = 0
    while i < n:
        if i == n - 1 or abs(t[i + 1, i]) == 0.0:
            vals[i] = t[i, i]
            i += 1
        else:
            # 2x2 bump: eigenvalues of [[p, q], [r, s]]
            p, q = t[i, i], t[i, i + 1]
            r, s = t[i + 1, i], t[i + 1, i + 1]
            tr, det = p + s, p * s - q * r
            disc = complex(tr * tr - 4.0 * det) ** 0.5
            vals[i] = (tr + disc) / 2.0
            vals[i + 1] = (tr - disc) / 2.0
            i += 2
    return vals


def _check_separation(eig_a, eig_b, scale):
    gap = np.abs(eig_a[:, None] + eig_b[None, :]).min()
    if gap <= SINGULARITY_RTOL * scale:
        raise SingularOperator(
            f"spectra of A and -B overlap: min |lam_A + lam_B| = {gap:.3e} "
            f"<= {SINGULARITY_RTOL:.0e} * {scale:.3e}"
        )


def dense_sylv(a, b, c):
    """Solve AX + XB = C for dense A (n x n), B (m x m), C (n x m).

    Symmetric coefficient pairs are solved by eigendecomposition; the general
    case runs Bartels-Stewart (real Schur forms, quasi-triangular solve with
    the 2x2 bumps handled blockwise by LAPACK trsyl). Raises SingularOperator
    when some |lam_A + lam_B| <= 1e-13 (||A||_2 + ||B||_2).
    """
    a = _as_square(a, "A")
    b = _as_square(b, "B")
    c = np.asarray(c, dtype=float)
    n, m = a.shape[0], b.shape[0]
    if c.shape != (n, m):
        raise DimensionMismatch(f"C must have shape {(n, m)}, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("C contains non-finite entries")

    if _is_symmetric(a) and _is_symmetric(b):
        lam_a, q_a = np.linalg.eigh((a + a.T) / 2.0)
        lam_b, q_b = np.linalg.eigh((b + b.T) / 2.0)
        scale = np.abs(lam_a).max(initial=0.0) + np.abs(lam_b).max(initial=0.0)
        _check_separation(lam_a.astype(complex), lam_b.astype(complex), scale)
        ct = q_a.T @ c @ q_b
        y = ct / (lam_a[:, None] + lam_b[None, :])
        return q_a @ y @ q_b.T

    t_a, z_a = scipy.linalg.schur(a, output="real")
    t_b, z_b = scipy.linalg.schur(b, output="real")
    eig_a = _quasi_tri_eigvals(t_a)
    eig_b = _quasi_tri_eigvals(t_b)
    # cheap 2-norm overestimate, sharper than Frobenius for banded operators
    norm_a = np.sqrt(np.linalg.norm(a, 1) * np.linalg.norm(a, np.inf))
    norm_b = np.sqrt(np.linalg.norm(b, 1) * np.linalg.norm(b, np.inf))
    _check_separation(eig_a, eig_b, norm_a + norm_b)

    ct = z_a.T @ c @ z_b
    trsyl = scipy.linalg.get_lapack_funcs("trsyl", (t_a, t_b, ct))
    y, scale, info = trsyl(t_a, t_b, ct)
    if info < 0 or scale == 0.0:
        raise SingularOperator("quasi-triangular Sylvester solve failed")
    return (z_a @ y @ z_b.T) / scale


def dense_lyap(a, c):
    """Solve AX + XA^T = C for symmetric C; the result is exactly symmetric."""
    a = _as_square(a, "A")
    c = np.asarray(c, dtype=float)
    n = a.shape[0]
    if c.shape != (n, n):
        raise DimensionMismatch(f"C must have shape {(n, n)}, got {c.shape}")
    c_scale = np.abs(c).max(initial=0.0)
    if c_scale > 0.0 and np.abs(c - c.T).max() > 1e-12 * c_scale:
        raise DimensionMismatch("C must be symmetric")
    c = (c + c.T) / 2.0

    if _is_symmetric(a):
        lam, q = np.linalg.eigh((a + a.T) / 2.0)
        scale = 2.0 * np.abs(lam).max(initial=0.0)
        _check_separation(lam.astype(complex), lam.astype(complex), scale)
        ct = q.T @ c @ q
        y = ct / (lam[:, None] + lam[None, :])
        x = q @ y @ q.T
    else:
        t, z = scipy.linalg.schur(a, output="real")
        eig = _quasi_tri_eigvals(t)
        norm_a = np.sqrt(np.linalg.norm(a, 1) * np.linalg.norm(a, np.inf))
        _check_separation(eig, eig, 2.0 * norm_a)
        ct = z.T @ c @ z
        trsyl = scipy.linalg.get_lapack_funcs("trsyl", (t, t, ct))
        y, sc, info = trsyl(t, t, ct, tranb="T")
        if info < 0 or sc == 0.0:
            raise SingularOperator("quasi-triangular Lyapunov solve failed")
        x = (z @ y @ z.T) / sc
    return (x + x.T) / 2.0


def kron_solve(a, b, c, max_unknowns=4096):
    """Brute-force oracle: LU-solve (I (x) A + B^T (x) I) vec(X) = vec(C).

    Kept free of any Schur machinery so it is an independent cross-check for
    dense_sylv. Refuses problems with more than ``max_unknowns`` unknowns.
    """
    a = _as_square(a, "A")
    b = _as_square(b, "B")
    c = np.asarray(c, dtype=float)
    n, m = a.shape[0], b.shape[0]
    if c.shape != (n, m):
        raise DimensionMismatch(f"C must have shape {(n, m)}, got {c.shape}")
    if n * m > max_unknowns:
        raise ValueError(f"kron_solve capped at {max_unknowns} unknowns, got {n * m}")

    k = np.kron(np.eye(m), a) + np.kron(b.T, np.eye(n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(k, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min(initial=np.inf) <= n * m * np.finfo(float).eps * diag.max(initial=0.0):
        raise SingularOperator("Kronecker system is numerically singular")
    x = scipy.linalg.lu_solve((lu, piv), c.flatten(order="F"), check_finite=False)
    return x.reshape((n, m), order="F")


@dataclass
class TruncatedSvd:
    """Rank-k factorization M ~ left @ diag(values) @ right.T."""

    left: np.ndarray
    values: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        return self.values.size

    def to_dense(self):
        return (self.left * self.values) @ self.right.T


def truncated_svd(m, tol_rel, rank_cap=None):
    """SVD of a dense matrix keeping singular values > tol_rel * sigma_1.

    The retained prefix is capped at ``rank_cap`` columns when given. A zero
    matrix yields rank 0.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {m.shape}")
    if m.size == 0 or min(m.shape) == 0:
        return TruncatedSvd(np.zeros((m.shape[0], 0)), np.zeros(0), np.zeros((m.shape[1], 0)))
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if s[0] == 0.0:
        k = 0
    else:
        k = int(np.count_nonzero(s > tol_rel * s[0]))
    if rank_cap is not None:
        k = min(k, int(rank_cap))
    return TruncatedSvd(u[:, :k].copy(), s[:k].copy(), vh[:k].T.copy())


def two_norm_estimate(apply, apply_adjoint, dim, iters=20, seed=POWER_SEED):
    """Power-method estimate of the 2-norm of a linear map on R^dim.

    Runs ``iters`` applications of the Gram operator M^T M starting from a
    reproducible Gaussian vector (fixed seed). The estimate approaches the
    true norm from below.
    """
    if dim <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max(1, int(iters))):
        w = np.asarray(apply(v)).reshape(-1)
        sigma = np.linalg.norm(w)
        if sigma == 0.0:
            return 0.0
        v = np.asarray(apply_adjoint(w)).reshape(-1)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
    return float(sigma)


def matrix_two_norm_estimate(m, iters=20, seed=POWER_SEED):
    """two_norm_estimate specialised to an explicit dense matrix."""
    m = np.asarray(m, dtype=float)
    return two_norm_estimate(lambda v: m @ v, lambda v: m.T @ v, m.shape[1], iters, seed)
