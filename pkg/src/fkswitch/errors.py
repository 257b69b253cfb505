"""Exception and warning classes.

Configuration problems derive from :class:`ModelError` (CLI exit code 1),
numerical failures from :class:`NumericalError` (CLI exit code 2).
"""

from __future__ import annotations


class FkSwitchError(Exception):
    """Base class for all package errors."""


class ModelError(FkSwitchError, ValueError):
    """Invalid model inputs."""


class NumericalError(FkSwitchError, ArithmeticError):
    """A computation could not be completed reliably."""


# -- generator / model validation -------------------------------------------

class NonSquare(ModelError):
    pass


class NegativeOffDiagonal(ModelError):
    pass


class RowSumNonZero(ModelError):
    pass


class RelationViolated(ModelError):
    pass


class BetaOutOfRange(ModelError):
    pass


class NonPositiveSigma(ModelError):
    pass


class NegativeRate(ModelError):
    pass


class StrikeNonPositive(ModelError):
    pass


class RegimeOutOfRange(ModelError):
    pass


class OutOfRange(ModelError):
    pass


class NegativeElapsed(ModelError):
    pass


class NonPositiveElapsed(ModelError):
    pass


class TimeOrderViolation(ModelError):
    pass


class ConfigError(ModelError):
    """Malformed configuration file."""


# -- numerical ----------------------------------------------------------------

class CertificateFailed(NumericalError):
    """The dampening supermartingale inequality is violated somewhere."""

    def __init__(self, message: str, worst: tuple[float, float, float] | None = None):
        super().__init__(message)
        self.worst = worst


class QuadratureOverflow(NumericalError):
    pass


class MaxIterExceeded(NumericalError):
    """Picard iteration stopped before reaching the tolerance.

    The last iterate and its report are attached so callers can still use them.
    """

    def __init__(self, message: str, solution=None, report=None):
        super().__init__(message)
        self.solution = solution
        self.report = report


class RhoNotContractive(NumericalError):
    pass


class UnstableParameters(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class ModelWarning(UserWarning):
    """Inputs are valid but outside the setting where guarantees hold."""


class GridClampWarning(UserWarning):
    """A query fell outside the solution grid and was clamped to its edge."""
