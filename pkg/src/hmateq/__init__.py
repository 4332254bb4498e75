"""Solvers for large Sylvester, Lyapunov and Riccati equations whose
coefficients are banded or hierarchically low-rank (HODLR/HSS)."""

from .dense import (
    TruncatedSvd,
    dense_lyap,
    dense_sylv,
    kron_solve,
    matrix_two_norm_estimate,
    truncated_svd,
    two_norm_estimate,
)
from .equations import (
    CareSolution,
    SylvesterProblem,
    newton_riccati,
    standard_newton,
    update_lyap_stable,
    update_sylv,
)
from .bounds import SpectralInterval, decay_bound, verify_decay, zolotarev_rate
from .dac import DacConfig, dac_lyap, dac_lyap_hermitian_split, dac_sylv
from .hodlr import (
    ClusterTree,
    HodlrMatrix,
    hodlr_add_compress,
    hodlr_axpy_lowrank,
    hodlr_blkdiag,
    hodlr_from_banded,
    hodlr_from_dense,
    hodlr_lu,
    hodlr_lu_solve,
    hodlr_matvec,
    hodlr_split,
    tree_build,
)
from .hss import (
    HssMatrix,
    PermutationMap,
    build_shuffled_companion,
    hss_add,
    hss_axpy_lowrank,
    hss_blkdiag,
    hss_compress,
    hss_hermitian_split,
    hss_identity,
    hss_kron_small,
    hss_matvec,
    hss_scale,
    hss_split,
    perfect_shuffle,
    rhs_theta_split,
)
from .krylov import (
    OperatorHandle,
    low_rank_lyap,
    low_rank_sylv,
    operator_from_dense,
    operator_from_sparse,
    transpose_handle,
    woodbury_handle,
)
from .lowrank import (
    LowRankFactor,
    SymLowRank,
    assemble_rhs,
    compress,
    split_indefinite,
    sym_compress,
)
from .report import SolveReport
from .errors import (
    BandTooWide,
    BoundViolated,
    BreakdownUnrecoverable,
    DimensionMismatch,
    DimensionOverflow,
    FirstStepFailed,
    InvalidInterval,
    LeafMatrix,
    LeafSolveFailure,
    MatEqError,
    NotDefinite,
    NumericallySingular,
    ParseError,
    SingularOperator,
    StabilityLost,
    ThetaZero,
    TreeMismatch,
)

__version__ = "0.1.0"
