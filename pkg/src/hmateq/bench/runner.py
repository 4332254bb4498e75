"""Benchmark execution: solve each requested size and report result rows.

A row's wall time covers the solve only; assembling the problem and
casting its coefficients into HODLR or HSS form is preprocessing (the
kernel right-hand sides are built densely here, which would otherwise
drown the timings they exist to measure). The residual in a row is always
recomputed from the returned solution by power iteration on the defining
equation, independently of the solver's internal estimate; memory_bytes
counts the payload of the solution representation.
"""

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse

from ..dac import DacConfig, dac_lyap, dac_lyap_hermitian_split
from ..dense import POWER_SEED, two_norm_estimate
from ..equations import CareSolution, newton_riccati, standard_newton
from ..hodlr import hodlr_from_banded, hodlr_from_dense, tree_build
from ..hss import (
    HssMatrix,
    hss_axpy_lowrank,
    hss_axpy_sandwich,
    hss_compress,
    hss_identity,
    hss_scale,
)
from ..krylov import operator_from_sparse
from ..lowrank import LowRankFactor, SymLowRank, _matvec, _rmatvec
from .matio import infer_format, load_matrix
from .problems import (
    PROBLEMS,
    CareProblem,
    default_profile,
    gen_convdiff,
    gen_heat,
    gen_laplace2d,
    gen_riccati_banded,
    gen_second_order_shuffle,
)

SOLVERS = ("dac_hodlr", "dac_hss", "newton_lowrank", "newton_standard")
LINEAR_PROBLEMS = ("laplace2d", "convdiff", "heat")
CSV_HEADER = "n,time_s,residual,rank,memory_bytes,iterations"

# iterations of the reporting power method; more than the solvers' default
# because these numbers are the published ones
_RES_ITERS = 30


@dataclass(frozen=True)
class BenchmarkSpec:
    """One benchmark request: a problem family, sizes and a solver.

    params defaults to the family's tolerance profile. files carries the
    matrix paths for from_files (keys "a", "b_u" and "c" or "c_u", optional
    "x0"); that family produces a single row whose size comes from the
    loaded data, so sizes is ignored. seed offsets the reporting power
    method; parallel solves rows concurrently.
    """

    problem: str
    sizes: tuple = ()
    solver: str = "dac_hss"
    params: object = None
    seed: int = 0
    files: dict = None
    parallel: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        linear = self.problem in LINEAR_PROBLEMS
        if linear and self.solver.startswith("newton"):
            raise ValueError(
                f"{self.problem} is a linear equation; use dac_hodlr or dac_hss")
        if not linear and self.solver.startswith("dac"):
            raise ValueError(
                f"{self.problem} is a Riccati equation; use newton_lowrank or"
                " newton_standard")
        sizes = tuple(int(n) for n in self.sizes)
        if any(n <= 0 for n in sizes):
            raise ValueError("sizes must be positive")
        object.__setattr__(self, "sizes", sizes)
        if self.params is None:
            object.__setattr__(self, "params", default_profile(self.problem))
        if self.problem == "from_files":
            have = set(self.files or ())
            if "a" not in have or "b_u" not in have or not have & {"c", "c_u"}:
                raise ValueError(
                    "from_files needs paths for a, b_u and c (or c_u)")


@dataclass(frozen=True)
class ResultRow:
    """One solved size; every field is finite and nonnegative."""

    n: int
    wall_time_s: float
    residual: float
    output_rank: int
    memory_bytes: int
    iterations: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be finite and nonnegative,"
                                 f" got {v!r}")


def run_benchmark(spec, error_log=None):
    """Solve every size in the spec; one ResultRow per completed size.

    A failing size is skipped: when error_log is a list it receives a dict
    with the size, the exception type name and its message, and the run
    moves on. Rows keep the order of spec.sizes even under spec.parallel.
    """
    sizes = (0,) if spec.problem == "from_files" else spec.sizes

    def attempt(n):
        try:
            return run_single(spec, n)[0]
        except Exception as exc:
            if error_log is not None:
                error_log.append({"n": n, "error": type(exc).__name__,
                                  "detail": str(exc)})
            return None

    if spec.parallel and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(sizes))) as pool:
            results = list(pool.map(attempt, sizes))
    else:
        results = [attempt(n) for n in sizes]
    return [r for r in results if r is not None]


def run_single(spec, n):
    """Solve one size, returning (row, solution, report).

    The solution keeps the representation the solver produced (formatted
    matrix, dense array, or the recompressed Riccati iterate); the report
    is the solver's own.
    """
    if spec.problem in LINEAR_PROBLEMS:
        problem = _gen_linear(spec.problem, n)
        a_f, c_f, cfg = _prepare_linear(problem, spec)
        t0 = time.perf_counter()
        x, rep = dac_lyap(a_f, c_f, cfg, a_sparse=problem.a)
        wall = time.perf_counter() - t0
        residual = _lyap_residual(problem, x, spec.seed)
        iterations = rep.iterations
    else:
        problem = _load_care(spec.files) if spec.problem == "from_files" \
            else _gen_care(spec.problem, n, spec.params)
        t0 = time.perf_counter()
        x, rep = _solve_care(problem, spec)
        wall = time.perf_counter() - t0
        residual = _care_residual(problem, x, spec.seed)
        iterations = (rep.extras["newton_steps"] + 1
                      if "newton_steps" in rep.extras else rep.iterations)
    row = ResultRow(n=x.shape[0], wall_time_s=wall, residual=residual,
                    output_rank=_solution_rank(x),
                    memory_bytes=_payload_bytes(x), iterations=iterations)
    return row, x, rep


# -- problem construction ----------------------------------------------------

def _gen_linear(name, n):
    if name == "laplace2d":
        return gen_laplace2d(n)
    if name == "convdiff":
        return gen_convdiff(n)
    q, r = divmod(n, 6)
    if r:
        raise ValueError(f"heat sizes are multiples of 6, got {n}")
    return gen_heat(q)


def _gen_care(name, n, prof):
    if name == "riccati_banded":
        return gen_riccati_banded(n)
    q, r = divmod(n, 2)
    if r:
        raise ValueError(f"second_order_shuffle sizes are even, got {n}")
    return gen_second_order_shuffle(q, leaf=prof.leaf)


def _load_care(files):
    def load(key):
        path = files[key]
        return load_matrix(path, infer_format(path))

    def densify(m):
        return m.toarray() if scipy.sparse.issparse(m) else np.asarray(m)

    a = load("a")
    b_u = densify(load("b_u"))
    if b_u.ndim == 1:
        b_u = b_u[:, None]
    if "c" in files:
        c = load("c")
    else:
        c_u = densify(load("c_u"))
        c = SymLowRank(c_u, -np.ones(c_u.shape[1]))
    x0 = densify(load("x0")) if "x0" in files else None
    n = b_u.shape[0]
    if a.shape != (n, n) or c.shape != (n, n):
        raise ValueError(f"coefficient shapes disagree: a {a.shape},"
                         f" b_u {b_u.shape}, c {c.shape}")
    return CareProblem(a=a, b_u=b_u, c=c, x0=x0)


# -- linear path -------------------------------------------------------------

def _prepare_linear(problem, spec):
    prof = spec.params
    n = problem.a.shape[0]
    tree = tree_build(n, prof.leaf)
    a_f = hodlr_from_banded(problem.a, tree)
    if scipy.sparse.issparse(problem.c):
        c_f = hodlr_from_banded(problem.c, tree)
    else:
        c_f = hodlr_from_dense(np.asarray(problem.c), tree, prof.tol_sigma)
    fmt = "hodlr" if spec.solver == "dac_hodlr" else "hss"
    if fmt == "hss":
        a_f = hss_compress(a_f, tol_rel=1e-15)
        c_f = hss_compress(c_f, tol_rel=prof.tol_sigma)
    cfg = DacConfig(tol_krylov=prof.tol_ek, tol_trunc=prof.tol_sigma,
                    leaf_size=prof.leaf, compress_solution=True, format=fmt)
    return a_f, c_f, cfg


def _lyap_residual(problem, x, seed):
    """||A X + X A^T - C|| / ((||A|| + ||A^T||) ||X||), norms by power method."""
    a = problem.a
    at = a.T.tocsr()
    n = a.shape[0]
    cmv = problem.c.dot if scipy.sparse.issparse(problem.c) \
        else lambda w: problem.c @ w

    def res(w):
        return a @ x.matvec(w) + x.matvec(at @ w) - cmv(w)

    # X and C are symmetric, hence so is the residual map
    kw = {"iters": _RES_ITERS, "seed": POWER_SEED + seed}
    num = two_norm_estimate(res, res, n, **kw)
    na = two_norm_estimate(a.dot, at.dot, n, **kw)
    nx = two_norm_estimate(x.matvec, x.rmatvec, n, **kw)
    return num / max(2.0 * na * nx, np.finfo(float).tiny)


# -- Riccati path ------------------------------------------------------------

def _solve_care(problem, spec):
    prof = spec.params
    if spec.solver == "newton_standard":
        a = problem.a.toarray() if scipy.sparse.issparse(problem.a) \
            else _to_dense(problem.a)
        c = _to_dense(problem.c)
        x0 = None if problem.x0 is None else _to_dense(problem.x0)
        return standard_newton(a, problem.b_u, c, x0=x0, tol_nw=prof.tol_nw)

    if spec.problem == "riccati_banded":
        x, rep = _newton_banded(problem, prof)
    elif spec.problem == "second_order_shuffle":
        x, rep = _newton_shuffled(problem, prof)
    else:
        x, rep = newton_riccati(problem.a, problem.b_u, problem.c,
                                x0=problem.x0, tol_nw=prof.tol_nw,
                                tol_inner=prof.tol_ek)
    if isinstance(x, CareSolution) and isinstance(x.base, HssMatrix):
        x = _fold_tail(x, prof.tol_sigma)
    return x, rep


def _newton_banded(problem, prof):
    """First step A X + X A = -I through the sign-definite splitting path."""
    a_sp = problem.a
    n = a_sp.shape[0]
    tree = tree_build(n, prof.leaf)
    a_hss = hss_compress(hodlr_from_banded(a_sp, tree), tol_rel=1e-15)
    c_hss = hss_scale(hss_identity(tree), -1.0)
    cfg = DacConfig(tol_krylov=prof.tol_ek, tol_trunc=prof.tol_sigma,
                    leaf_size=prof.leaf, compress_solution=True, format="hss")

    def first(_a, _bu, _c, _x0):
        return dac_lyap_hermitian_split(a_hss, c_hss, cfg, a_sparse=a_sp)

    return newton_riccati(a_sp, problem.b_u, problem.c, x0=None,
                          tol_nw=prof.tol_nw, first_step_solver=first,
                          tol_inner=prof.tol_ek)


def _newton_shuffled(problem, prof):
    """First step on A0 = A - x0 B, sparse-plus-low-rank in shuffled order."""
    a_t, a_sp, b_u, x0 = problem.a, problem.a_sparse, problem.b_u, problem.x0
    x0_bu = x0.matvec(b_u)
    a0_hss = hss_axpy_lowrank(a_t, LowRankFactor(-x0_bu, b_u), tol_rel=1e-15)
    # first right-hand side C - x0 B x0 = -I - (x0 B_U)(x0 B_U)^T
    c0_hss = hss_axpy_lowrank(hss_scale(hss_identity(a_t.tree), -1.0),
                              LowRankFactor(-x0_bu, x0_bu), tol_rel=1e-15)
    # A itself is singular (the companion's K kills constants); only the
    # stabilized A0 can be factored. x0 B touches a handful of rows, so A0
    # assembles as one sparse matrix
    a0_sp = (a_sp - scipy.sparse.csr_matrix(x0_bu)
             @ scipy.sparse.csr_matrix(b_u).T).tocsr()
    cfg = DacConfig(tol_krylov=prof.tol_ek, tol_trunc=prof.tol_sigma,
                    leaf_size=prof.leaf, compress_solution=True, format="hss")

    def first(_a, _bu, _c, _x0):
        return dac_lyap(a0_hss, c0_hss, cfg, a_sparse=a0_sp)

    a0_op = operator_from_sparse(a0_sp)
    return newton_riccati(a_t, b_u, problem.c, x0=x0, tol_nw=prof.tol_nw,
                          first_step_solver=first, tol_inner=prof.tol_ek,
                          a0_op=a0_op)


def _fold_tail(sol, tol):
    """Recompress base + tail into one HSS matrix (the reported iterate)."""
    if sol.tail.rank == 0:
        return sol.base
    x = hss_axpy_sandwich(sol.base, sol.tail.basis, np.diag(sol.tail.core),
                          sol.tail.basis, tol_rel=tol)
    x.symmetric = True
    return x


def _care_residual(problem, x, seed):
    """||A X + X A^T - X B X - C|| over the same figure at the initial guess."""
    a, b_u, c = problem.a, problem.b_u, problem.c
    n = b_u.shape[0]
    amv = a.dot if scipy.sparse.issparse(a) else lambda w: _matvec(a, w)
    atv = a.T.dot if scipy.sparse.issparse(a) else lambda w: _rmatvec(a, w)
    cmv = c.dot if scipy.sparse.issparse(c) else lambda w: _matvec(c, w)
    kw = {"iters": _RES_ITERS, "seed": POWER_SEED + seed}

    def residual_norm(xk):
        if xk is None:
            return two_norm_estimate(cmv, cmv, n, **kw)
        xmv = (lambda w: xk @ w) if isinstance(xk, np.ndarray) else xk.matvec
        x_bu = xmv(b_u)

        def res(w):
            return amv(xmv(w)) + xmv(atv(w)) - x_bu @ (x_bu.T @ w) - cmv(w)

        return two_norm_estimate(res, res, n, **kw)

    num = residual_norm(x)
    den = residual_norm(problem.x0)
    return num / max(den, np.finfo(float).tiny)


# -- row bookkeeping ---------------------------------------------------------

def _to_dense(m):
    if scipy.sparse.issparse(m):
        return m.toarray()
    return m.to_dense() if hasattr(m, "to_dense") else np.asarray(m)


def _solution_rank(x):
    if hasattr(x, "rank"):
        r = x.rank
        return int(r() if callable(r) else r)
    if isinstance(x, CareSolution):
        return _solution_rank(x.base) + x.tail.rank
    return int(min(np.asarray(x).shape))


def _payload_bytes(x):
    if hasattr(x, "memory_bytes"):
        return int(x.memory_bytes())
    if isinstance(x, SymLowRank):
        return x.basis.nbytes + x.core.nbytes
    if isinstance(x, CareSolution):
        return _payload_bytes(x.base) + _payload_bytes(x.tail)
    return np.asarray(x).nbytes


# -- row serialization -------------------------------------------------------

def emit(rows, format="csv", path=None):
    """Render rows as csv (exact header above) or its json mirror.

    Floats are written with repr so a read back reproduces them bit for
    bit. Returns the text; also writes it to path when given.
    """
    if format == "csv":
        lines = [CSV_HEADER]
        lines += [f"{r.n},{r.wall_time_s!r},{r.residual!r},{r.output_rank},"
                  f"{r.memory_bytes},{r.iterations}" for r in rows]
        text = "\n".join(lines) + "\n"
    elif format == "json":
        text = json.dumps([_row_dict(r) for r in rows], indent=2) + "\n"
    else:
        raise ValueError(f"unknown output format {format!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _row_dict(r):
    return {"n": r.n, "time_s": r.wall_time_s, "residual": r.residual,
            "rank": r.output_rank, "memory_bytes": r.memory_bytes,
            "iterations": r.iterations}


def read_rows(text, format="csv"):
    """Parse emit() output back into ResultRow objects."""
    if format == "csv":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError(f"expected header {CSV_HEADER!r}")
        rows = []
        for ln in lines[1:]:
            n, t, res, rank, mem, it = ln.split(",")
            rows.append(ResultRow(int(n), float(t), float(res), int(rank),
                                  int(mem), int(it)))
        return rows
    if format == "json":
        return [ResultRow(d["n"], d["time_s"], d["residual"], d["rank"],
                          d["memory_bytes"], d["iterations"])
                for d in json.loads(text)]
    raise ValueError(f"unknown output format {format!r}")
