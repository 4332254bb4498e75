"""Solve reports shared by the Krylov, equation-level and D&C drivers."""

from dataclasses import dataclass, field


@dataclass
class SolveReport:
    """What a solver did and how far it can be trusted.

    residual_est     estimated 2-norm residual of the returned solution
    iterations       Krylov steps / Newton steps, whichever the solver counts
    output_rank      rank of the returned factor (0 for dense outputs)
    wall_time_s      wall-clock seconds spent in the solver
    residual_budget  tau_0 + tau_delta composition: a bound the residual of the
                     assembled solution should not exceed
    converged        False when the step limit was hit before the tolerance
    flags            machine-readable notes ("max_steps_exceeded", ...)
    extras           solver-specific diagnostics (correction norms, ranks, ...)
    """

    residual_est: float = 0.0
    iterations: int = 0
    output_rank: int = 0
    wall_time_s: float = 0.0
    residual_budget: float = 0.0
    converged: bool = True
    flags: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
