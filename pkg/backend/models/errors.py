"""
Exception hierarchy for the toolkit.

Services raise these; the CLI maps them to exit codes.
"""

from typing import Optional


class BiPoissonError(Exception):
    """Base class for every toolkit error."""


class InvalidParametersError(BiPoissonError, ValueError):
    """A precondition on parameters, times or orders is violated."""


class SupportViolationError(BiPoissonError, ValueError):
    """A transition start point lies outside {x : 1 + eta*x >= 0}."""


class BranchAmbiguityError(BiPoissonError, ArithmeticError):
    """Cauchy transform requested on the real axis at a branch point."""


class AtomWeightError(BiPoissonError, ArithmeticError):
    """An atom weight fell outside [0, 1]."""


class EigenSolverError(BiPoissonError, ArithmeticError):
    """The tridiagonal eigen-solve did not converge."""


class SeriesInversionError(BiPoissonError, ArithmeticError):
    """Series division, reversion or composition hit a bad leading term."""


class ConditionalMomentError(BiPoissonError, ArithmeticError):
    """A conditional moment is not a monic polynomial of the expected degree."""


class IdentityVerificationError(BiPoissonError, AssertionError):
    """An algebraic identity has a nonzero residual."""

    def __init__(self, identity: str, index: Optional[int], residual: float):
        self.identity = identity
        self.index = index
        self.residual = residual
        where = f" at n={index}" if index is not None else ""
        super().__init__(f"identity {identity} failed{where}: residual {residual}")
