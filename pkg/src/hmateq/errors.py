"""Exception types shared across the package."""


class MatEqError(Exception):
    """Base class for all solver errors."""


class DimensionMismatch(MatEqError, ValueError):
    """Operand shapes are inconsistent with the requested operation."""


class SingularOperator(MatEqError):
    """The equation has no unique solution (spectra of A and -B intersect)."""


class BreakdownUnrecoverable(MatEqError):
    """Every Krylov block column deflated to zero before convergence."""


class NumericallySingular(MatEqError):
    """A factorization hit a pivot too small to trust."""


class BandTooWide(MatEqError, ValueError):
    """Bandwidth exceeds the smallest leaf of the cluster tree."""


class TreeMismatch(MatEqError, ValueError):
    """Two hierarchical matrices do not share a cluster tree."""


class LeafMatrix(MatEqError, ValueError):
    """A depth-0 (dense leaf) matrix cannot be split further."""


class NotDefinite(MatEqError):
    """A matrix expected to be positive definite is not."""


class ThetaZero(MatEqError, ValueError):
    """The right-hand-side balancing parameter theta must be nonzero."""


class StabilityLost(MatEqError):
    """Newton iteration residuals grew over several consecutive steps."""


class FirstStepFailed(MatEqError):
    """The initial full Lyapunov solve of the Newton iteration failed."""


class LeafSolveFailure(MatEqError):
    """A dense leaf solve inside the divide-and-conquer recursion failed."""


class InvalidInterval(MatEqError, ValueError):
    """A spectral interval must satisfy 0 < a <= b."""


class BoundViolated(MatEqError):
    """A measured singular-value decay violated its theoretical bound."""


class ParseError(MatEqError, ValueError):
    """A matrix file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionOverflow(MatEqError, ValueError):
    """Declared dimensions in a matrix file header are implausibly large."""
