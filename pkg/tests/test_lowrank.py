import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmateq import DimensionMismatch
from hmateq.lowrank import (
    LowRankFactor,
    SymLowRank,
    assemble_rhs,
    compress,
    compress_abs,
    split_indefinite,
    sym_compress,
)


def random_factor(rng, n, m, cols, rank):
    """cols columns spanning only `rank` directions."""
    base_l = rng.standard_normal((n, rank))
    base_r = rng.standard_normal((m, rank))
    mix = rng.standard_normal((rank, cols))
    return LowRankFactor(base_l @ mix, base_r @ mix + 0.0 * rng.standard_normal((m, cols)))


# ------------------------------------------------------------------ compress

def test_compress_drops_duplicated_columns():
    rng = np.random.default_rng(0)
    u = rng.standard_normal((10, 2))
    v = rng.standard_normal((8, 2))
    f = LowRankFactor(np.hstack([u, u]), np.hstack([v, v]))
    g = compress(f, 1e-12)
    assert g.rank == 2
    assert np.linalg.norm(g.to_dense() - f.to_dense()) <= 1e-12 * np.linalg.norm(f.to_dense())


def test_compress_rank3_in_7_columns():
    rng = np.random.default_rng(1)
    f = random_factor(rng, 30, 25, 7, 3)
    g = compress(f, 1e-12)
    assert g.rank == 3
    err = np.linalg.norm(g.to_dense() - f.to_dense(), 2)
    assert err <= 1e-14 * np.linalg.norm(f.to_dense(), 2) + 1e-14


def test_compress_zero_factor():
    f = LowRankFactor(np.zeros((5, 3)), np.zeros((4, 3)))
    g = compress(f, 1e-12)
    assert g.rank == 0
    assert compress(LowRankFactor.zero(5, 4), 1e-12).rank == 0


def test_compress_never_increases_rank_and_idempotent():
    rng = np.random.default_rng(2)
    for _ in range(10):
        f = random_factor(rng, 12, 9, 6, 4)
        g = compress(f, 1e-10)
        assert g.rank <= f.rank
        h = compress(g, 1e-10)
        assert h.rank == g.rank
        assert np.linalg.norm(h.to_dense() - g.to_dense()) <= 1e-12 * max(
            1.0, np.linalg.norm(g.to_dense())
        )


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_compress_error_bound_property(n, m, cols, seed):
    rng = np.random.default_rng(seed)
    f = LowRankFactor(rng.standard_normal((n, cols)), rng.standard_normal((m, cols)))
    tol = 1e-8
    g = compress(f, tol)
    s1 = np.linalg.norm(f.to_dense(), 2)
    assert np.linalg.norm(g.to_dense() - f.to_dense(), 2) <= max(tol * s1 * 1.01, 1e-14)
    assert g.rank <= f.rank


def test_compress_abs_threshold():
    f = LowRankFactor(np.diag([1.0, 1e-5, 1e-9]), np.eye(3))
    g = compress_abs(f, 1e-7)
    assert g.rank == 2


def test_sym_compress():
    rng = np.random.default_rng(3)
    basis = rng.standard_normal((15, 6))
    core = np.array([5.0, -3.0, 1e-14, 0.0, 2.0, -1e-15])
    s = SymLowRank(basis, core)
    t = sym_compress(s, 1e-12)
    assert t.rank <= 4
    assert np.linalg.norm(t.to_dense() - s.to_dense(), 2) <= 1e-11 * np.linalg.norm(
        s.to_dense(), 2
    )
    # mixed-sign cores survive with signs intact
    assert (t.core > 0).sum() >= 1 and (t.core < 0).sum() >= 1


def test_factor_validation():
    with pytest.raises(DimensionMismatch):
        LowRankFactor(np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(DimensionMismatch):
        SymLowRank(np.zeros((3, 2)), np.zeros(3))


def test_factor_norm2_exact():
    rng = np.random.default_rng(4)
    f = LowRankFactor(rng.standard_normal((20, 3)), rng.standard_normal((17, 3)))
    assert abs(f.norm2() - np.linalg.norm(f.to_dense(), 2)) <= 1e-12 * f.norm2()
    s = SymLowRank(rng.standard_normal((20, 3)), np.array([2.0, -5.0, 1.0]))
    assert abs(s.norm2() - np.linalg.norm(s.to_dense(), 2)) <= 1e-12 * s.norm2()


# -------------------------------------------------------------- assemble_rhs

def test_assemble_rhs_all_zero():
    f = assemble_rhs(None, None, None, None, 6, 5)
    assert f.rank == 0 and f.shape == (6, 5)


def test_assemble_rhs_passthrough_dc():
    rng = np.random.default_rng(5)
    dc = LowRankFactor(rng.standard_normal((6, 2)), rng.standard_normal((5, 2)))
    f = assemble_rhs(None, None, dc, np.zeros((6, 5)), 6, 5)
    assert np.allclose(f.to_dense(), dc.to_dense())


def test_assemble_rhs_matches_dense_formula():
    rng = np.random.default_rng(6)
    n, m = 9, 7
    da = LowRankFactor(rng.standard_normal((n, 2)), rng.standard_normal((n, 2)))
    db = LowRankFactor(rng.standard_normal((m, 1)), rng.standard_normal((m, 1)))
    dc = LowRankFactor(rng.standard_normal((n, 3)), rng.standard_normal((m, 3)))
    x0 = rng.standard_normal((n, m))
    f = assemble_rhs(da, db, dc, x0, n, m)
    expect = dc.to_dense() - da.to_dense() @ x0 - x0 @ db.to_dense()
    assert np.linalg.norm(f.to_dense() - expect) <= 1e-12 * np.linalg.norm(expect)
    assert f.rank == da.rank + db.rank + dc.rank


def test_assemble_rhs_rank_bound():
    rng = np.random.default_rng(7)
    n = 8
    da = LowRankFactor(rng.standard_normal((n, 2)), rng.standard_normal((n, 2)))
    f = assemble_rhs(da, None, None, np.eye(n), n, n)
    assert f.rank == 2
    assert np.allclose(f.to_dense(), -da.to_dense())


def test_assemble_rhs_dimension_checks():
    da = LowRankFactor(np.zeros((4, 1)), np.zeros((4, 1)))
    with pytest.raises(DimensionMismatch):
        assemble_rhs(da, None, None, None, 5, 5)


# ---------------------------------------------------------- split_indefinite

def test_split_indefinite_zero():
    u1, u2 = split_indefinite(
        np.zeros((6, 0)), np.zeros((6, 0)), np.zeros((6, 0)), np.zeros(0), None
    )
    assert u1.shape == (6, 0) and u2.shape == (6, 0)


def test_split_indefinite_definite_rhs_single_sided():
    rng = np.random.default_rng(8)
    u_c = rng.standard_normal((10, 2))
    u1, u2 = split_indefinite(np.zeros((10, 0)), np.zeros((10, 0)), u_c, np.ones(2), None)
    assert u2.shape[1] == 0
    assert np.linalg.norm(u1 @ u1.T - u_c @ u_c.T) <= 1e-12 * np.linalg.norm(u_c @ u_c.T)


def test_split_indefinite_reconstruction():
    rng = np.random.default_rng(9)
    n = 12
    u_a = rng.standard_normal((n, 2))
    v_a = rng.standard_normal((n, 2))
    u_c = rng.standard_normal((n, 3))
    sigma_c = np.array([2.0, -1.0, 0.5])
    x0 = rng.standard_normal((n, n))
    x0 = x0 + x0.T
    rhs = (
        u_c @ np.diag(sigma_c) @ u_c.T
        - (u_a @ v_a.T) @ x0
        - x0 @ (v_a @ u_a.T)
    )
    u1, u2 = split_indefinite(u_a, v_a, u_c, sigma_c, x0)
    rebuilt = u1 @ u1.T - u2 @ u2.T
    assert np.linalg.norm(rebuilt - rhs, 2) <= 1e-12 * np.linalg.norm(rhs, 2)
    assert u1.shape[1] + u2.shape[1] <= 3 + 2 * 2


def test_split_indefinite_drops_tiny_eigenvalues():
    n = 8
    u_c = np.eye(n)[:, :3]
    sigma_c = np.array([1.0, -0.5, 1e-15])
    u1, u2 = split_indefinite(np.zeros((n, 0)), np.zeros((n, 0)), u_c, sigma_c, None, 1e-12)
    assert u1.shape[1] == 1 and u2.shape[1] == 1
