"""Runner behavior on small instances of every problem family.

The laplace2d row doubles as a residual oracle: at n = 64 the relative
residual is recomputed with dense exact norms and must agree with both the
row value and the solver report to the stated 20 percent (the row value
comes from power iteration). File-based problems run against matrices
written by the test itself, with the dense Kleinman iteration as oracle.
"""

import numpy as np
import pytest
import scipy.sparse

from hmateq.bench.matio import save_matrix
from hmateq.bench.problems import ToleranceProfile, default_profile
from hmateq.bench.runner import (
    CSV_HEADER,
    BenchmarkSpec,
    ResultRow,
    emit,
    read_rows,
    run_benchmark,
    run_single,
)
from hmateq.equations import standard_newton

SMALL = ToleranceProfile(tol_nw=1e-8, tol_ek=1e-10, leaf=16, tol_sigma=1e-12)


def lap_spec(sizes, solver="dac_hodlr", **kw):
    return BenchmarkSpec(problem="laplace2d", sizes=sizes, solver=solver,
                         params=SMALL, **kw)


class TestSpecValidation:
    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="poisson3d", sizes=(8,), solver="dac_hss")

    def test_unknown_solver(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="laplace2d", sizes=(8,), solver="multigrid")

    def test_solver_problem_mismatch(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="laplace2d", sizes=(8,), solver="newton_lowrank")
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="riccati_banded", sizes=(8,), solver="dac_hss")

    def test_sizes_positive_and_coerced(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="laplace2d", sizes=(0,), solver="dac_hss")
        spec = BenchmarkSpec(problem="laplace2d", sizes=[np.int64(16), 32.0],
                             solver="dac_hss")
        assert spec.sizes == (16, 32)

    def test_default_params_injected(self):
        spec = BenchmarkSpec(problem="heat", sizes=(96,), solver="dac_hss")
        assert spec.params == default_profile("heat")

    def test_from_files_needs_paths(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="from_files", sizes=(), solver="newton_lowrank")
        with pytest.raises(ValueError):
            BenchmarkSpec(problem="from_files", sizes=(), solver="newton_lowrank",
                          files={"a": "a.mtx"})


class TestResultRow:
    def test_accepts_finite_nonnegative(self):
        r = ResultRow(8, 0.25, 1e-12, 3, 512, 2)
        assert r.n == 8 and r.iterations == 2

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ResultRow(8, 0.25, float("nan"), 3, 512, 2)
        with pytest.raises(ValueError):
            ResultRow(8, float("inf"), 1e-12, 3, 512, 2)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ResultRow(8, 0.25, 1e-12, -3, 512, 2)


class TestLinearRows:
    def test_laplace_row_fields(self):
        rows = run_benchmark(lap_spec((64,)))
        assert len(rows) == 1
        r = rows[0]
        assert r.n == 64
        assert r.residual <= 1e-9
        assert r.output_rank > 0
        assert r.memory_bytes > 0
        assert r.iterations > 0
        assert r.wall_time_s >= 0.0

    def test_residual_agrees_with_dense_recompute(self):
        from hmateq.bench.problems import gen_laplace2d

        row, x, rep = run_single(lap_spec((64,), solver="dac_hss"), 64)
        p = gen_laplace2d(64)
        a, c = p.a.toarray(), p.c
        xd = x.to_dense()
        res = np.linalg.norm(a @ xd + xd @ a.T - c, 2) / (
            2.0 * np.linalg.norm(a, 2) * np.linalg.norm(xd, 2))
        assert abs(res - row.residual) <= 0.2 * res
        assert abs(rep.residual_est - row.residual) <= 0.2 * max(res, 1e-16)

    def test_empty_sizes(self):
        log = []
        assert run_benchmark(lap_spec(()), error_log=log) == []
        assert log == []

    def test_error_rows_are_recorded_and_skipped(self):
        # 100 is not a multiple of 6; the 96 row must still complete
        spec = BenchmarkSpec(problem="heat", sizes=(100, 96), solver="dac_hss",
                             params=ToleranceProfile(1e-8, 1e-6, 16, 1e-6))
        log = []
        rows = run_benchmark(spec, error_log=log)
        assert [r.n for r in rows] == [96]
        assert len(log) == 1 and log[0]["n"] == 100
        assert log[0]["error"] == "ValueError"

    def test_heat_row(self):
        spec = BenchmarkSpec(problem="heat", sizes=(96,), solver="dac_hss",
                             params=ToleranceProfile(1e-8, 1e-6, 16, 1e-6))
        r = run_benchmark(spec)[0]
        assert r.residual <= 1e-5
        assert r.output_rank <= 25

    def test_deterministic_given_seed(self):
        key = lambda r: (r.n, r.residual, r.output_rank, r.memory_bytes,
                         r.iterations)
        one = [key(r) for r in run_benchmark(lap_spec((48, 64), seed=5))]
        two = [key(r) for r in run_benchmark(lap_spec((48, 64), seed=5))]
        assert one == two

    def test_parallel_preserves_order(self):
        rows = run_benchmark(lap_spec((48, 64), parallel=True))
        assert [r.n for r in rows] == [48, 64]
        assert all(r.residual <= 1e-9 for r in rows)


class TestCareRows:
    def test_riccati_banded_row(self):
        spec = BenchmarkSpec(problem="riccati_banded", sizes=(64,),
                             solver="newton_lowrank",
                             params=ToleranceProfile(1e-8, 1e-12, 32, 1e-12))
        row, x, rep = run_single(spec, 64)
        assert row.residual <= 1e-7
        assert row.iterations >= 2
        assert row.output_rank > 0
        p_ref = standard_newton(
            np.diag(np.ones(63), 1) + np.diag(np.ones(63), -1) - 2 * np.eye(64),
            np.eye(64)[:, [0, 63]], -np.eye(64), tol_nw=1e-12)[0]
        err = np.linalg.norm(x.to_dense() - p_ref, 2) / np.linalg.norm(p_ref, 2)
        assert err <= 1e-7

    def test_correction_rhs_rank_two(self):
        spec = BenchmarkSpec(problem="second_order_shuffle", sizes=(64,),
                             solver="newton_lowrank",
                             params=ToleranceProfile(1e-8, 1e-12, 16, 1e-12))
        row, x, rep = run_single(spec, 64)
        assert row.residual <= 1e-7
        assert rep.extras["rhs_ranks"]
        assert all(r == 2 for r in rep.extras["rhs_ranks"])

    def test_newton_standard_row(self):
        spec = BenchmarkSpec(problem="riccati_banded", sizes=(32,),
                             solver="newton_standard")
        r = run_benchmark(spec)[0]
        assert r.residual <= 1e-7
        assert r.output_rank == 32  # dense baseline stores everything

    def test_from_files_round(self, tmp_path):
        rng = np.random.default_rng(3)
        n = 24
        a = scipy.sparse.diags(
            [np.ones(n - 1), -2.1 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
            format="csr")
        b_u = rng.standard_normal((n, 2)) / 4.0
        c_u = rng.standard_normal((n, 1))
        save_matrix(a, tmp_path / "a.mtx", "matrix-market")
        save_matrix(b_u, tmp_path / "b_u.bin", "raw-binary")
        save_matrix(c_u, tmp_path / "c_u.bin", "raw-binary")
        spec = BenchmarkSpec(
            problem="from_files", sizes=(), solver="newton_lowrank",
            files={"a": str(tmp_path / "a.mtx"),
                   "b_u": str(tmp_path / "b_u.bin"),
                   "c_u": str(tmp_path / "c_u.bin")})
        rows = run_benchmark(spec)
        assert len(rows) == 1 and rows[0].n == 24
        x_ref, _ = standard_newton(a.toarray(), b_u, -c_u @ c_u.T, tol_nw=1e-12)
        _, x, _ = run_single(spec, 0)
        err = np.linalg.norm(np.asarray(x) - x_ref, 2) / np.linalg.norm(x_ref, 2)
        assert err <= 1e-6


class TestEmit:
    def rows(self):
        return [ResultRow(64, 0.125, 3.5e-12, 9, 73728, 41),
                ResultRow(128, 0.5, 4.25e-12, 11, 221184, 50)]

    def test_csv_header_exact(self):
        text = emit(self.rows(), "csv")
        assert text.splitlines()[0] == CSV_HEADER
        assert CSV_HEADER == "n,time_s,residual,rank,memory_bytes,iterations"

    def test_csv_round_trip(self):
        rows = self.rows()
        assert read_rows(emit(rows, "csv"), "csv") == rows

    def test_json_mirror(self):
        import json

        rows = self.rows()
        data = json.loads(emit(rows, "json"))
        assert [tuple(d) for d in data] == [
            ("n", "time_s", "residual", "rank", "memory_bytes", "iterations")] * 2
        assert data[0]["n"] == 64 and data[1]["rank"] == 11
        assert read_rows(emit(rows, "json"), "json") == rows

    def test_writes_file(self, tmp_path):
        path = tmp_path / "out.csv"
        text = emit(self.rows(), "csv", path)
        assert path.read_text() == text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit(self.rows(), "xml")
        with pytest.raises(ValueError):
            read_rows("n\n", "xml")

    def test_csv_header_mismatch_rejected(self):
        with pytest.raises(ValueError):
            read_rows("a,b\n1,2\n", "csv")
