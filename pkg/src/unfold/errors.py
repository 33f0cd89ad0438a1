"""Exception hierarchy shared by the library and the CLI."""


class UnfoldError(Exception):
    """Base class for all errors raised by :mod:`unfold`."""


class ConfigError(UnfoldError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidIntensity(UnfoldError, ValueError):
    """An intensity is negative, nonpositive where positivity is required, or non-finite."""


class DiagonalSingularity(UnfoldError, ValueError):
    """A singular kernel was evaluated on its diagonal."""


class SolverError(UnfoldError, ArithmeticError):
    """A numerical solve failed (exit code 4 in the CLI)."""


class IllPosedDiscretization(SolverError):
    """The Galerkin matrix is singular or indefinite."""

    def __init__(self, message, min_eigenvalue):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"{message} (smallest eigenvalue estimate {min_eigenvalue:.3e})")


class SingularHessian(SolverError):
    """The Newton Hessian could not be factorized."""


class ExponentOverflow(SolverError):
    """The log-intensity left the admissible clip range during Newton iterations."""


class InfeasibleTarget(UnfoldError):
    """The moment target lies outside the range of the exponential family.

    ``residual`` is the last moment residual reached (sup-norm) and ``target``
    the offending coefficient vector, kept for post-mortem inspection.
    """

    def __init__(self, message, residual=float("nan"), target=None):
        self.residual = residual
        self.target = target
        super().__init__(message)
