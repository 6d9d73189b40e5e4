"""Exception hierarchy shared by the library and the command line.

Every error carries an ``exit_code`` so the CLI can map failures to
distinct process statuses without a lookup table of its own.
"""


class SupOUError(Exception):
    """Base class for all package errors."""

    exit_code = 1

    @property
    def category(self):
        return type(self).__name__


class DomainError(SupOUError, ValueError):
    """An argument lies outside the domain of a deformed exp/log or objective."""

    exit_code = 8


class FeasibilityError(DomainError):
    """The shape parameter ``q`` is outside the admissible interval for a side."""

    exit_code = 5

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class ConvergenceError(SupOUError, RuntimeError):
    """An iterative method stopped before meeting its tolerance."""

    exit_code = 6

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class AlignmentError(SupOUError, ValueError):
    """Density values and quadrature nodes have different lengths."""

    exit_code = 8


class ParseError(SupOUError, ValueError):
    """A CSV or model file could not be parsed or violates an invariant."""

    exit_code = 3


class GridError(SupOUError, ValueError):
    """Timestamps are not on a usable hourly grid."""

    exit_code = 4


class DegenerateError(SupOUError, ValueError):
    """A statistic is undefined because the series has zero variance."""

    exit_code = 9


class BoundaryError(ConvergenceError):
    """A fitted parameter was pinned to its constraint boundary."""


class InfeasibleError(ConvergenceError):
    """No candidate improved on the degenerate (zero Levy measure) fit."""
