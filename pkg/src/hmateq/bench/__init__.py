"""Benchmark problems, runner and command line interface."""

from .problems import (
    CareProblem,
    ToleranceProfile,
    default_profile,
    gen_convdiff,
    gen_heat,
    gen_laplace2d,
    gen_riccati_banded,
    gen_second_order_shuffle,
)

__all__ = [
    "CareProblem",
    "ToleranceProfile",
    "default_profile",
    "gen_convdiff",
    "gen_heat",
    "gen_laplace2d",
    "gen_riccati_banded",
    "gen_second_order_shuffle",
]
