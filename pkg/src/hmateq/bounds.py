"""Closed-form singular-value decay rates for Sylvester solutions.

When A and B are SPD with spectra inside [a, b], the solution of
AX + XB = D with rank-s right-hand side has singular values decaying like
sigma_{1+sh}(X) <= 4 rho^{-h} ||X||_2 with rho = exp(pi^2 / log(4b/a)).
These functions evaluate the rate and check it against dense solves; they
serve as oracles for the low-rank and divide-and-conquer property tests.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dense import dense_sylv, kron_solve
from .errors import BoundViolated, InvalidInterval


@dataclass(frozen=True)
class SpectralInterval:
    """A positive interval [a, b] enclosing a spectrum."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.a <= self.b < math.inf):
            raise InvalidInterval(f"need 0 < a <= b < inf, got [{self.a}, {self.b}]")


def zolotarev_rate(iv):
    """The decay base rho = exp(pi^2 / log(4 b / a))."""
    return math.exp(math.pi ** 2 / math.log(4.0 * iv.b / iv.a))


def decay_bound(k, h, iv):
    """Bound on sigma_{1+kh}(X) / ||X||_2, namely 4 rho^{-h}.

    The rank k of the right-hand side only positions the singular-value
    index; the bound value depends on h and the interval alone.
    """
    if k < 1:
        raise InvalidInterval("the right-hand side rank must be positive")
    if h < 0:
        raise InvalidInterval("h must be nonnegative")
    return 4.0 * zolotarev_rate(iv) ** (-h)


def _spd_spectrum(m, name):
    lam = np.linalg.eigvalsh((m + m.T) / 2.0)
    if lam.min() <= 0.0:
        raise InvalidInterval(f"{name} must be symmetric positive definite")
    return lam


def verify_decay(a, b, d, hmax=5):
    """Check the decay bound densely on AX + XB = D.

    A, B are SPD (n <= 512); D is a LowRankFactor of rank s. Solves with the
    Kronecker oracle when small enough, with the dense Sylvester solver
    otherwise, and asserts sigma_{1+sh}(X) / ||X||_2 <= 4 rho^{-h} for
    h = 1..hmax with [a, b] the union enclosure of both spectra. Raises
    BoundViolated on failure; returns the measured ratios.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.shape[0], b.shape[0]
    if max(n, m) > 512:
        raise ValueError("dense decay verification is limited to n <= 512")
    lam = np.concatenate([_spd_spectrum(a, "A"), _spd_spectrum(b, "B")])
    iv = SpectralInterval(lam.min(), lam.max())
    rho = zolotarev_rate(iv)

    s = d.rank
    if s < 1:
        raise InvalidInterval("the right-hand side must have positive rank")
    c = d.left @ d.right.T
    x = kron_solve(a, b, c) if n * m <= 4096 else dense_sylv(a, b, c)
    sig = np.linalg.svd(x, compute_uv=False)
    ratios = []
    for h in range(1, hmax + 1):
        idx = s * h  # zero-based position of sigma_{1+sh}
        ratio = float(sig[idx] / sig[0]) if idx < sig.size else 0.0
        bound = 4.0 * rho ** (-h)
        ratios.append((h, ratio, bound))
        if ratio > bound:
            raise BoundViolated(
                f"sigma_(1+{s}*{h})/sigma_1 = {ratio:.3e} exceeds 4 rho^-{h} = {bound:.3e}")
    return {"rho": rho, "interval": iv, "ratios": ratios}
