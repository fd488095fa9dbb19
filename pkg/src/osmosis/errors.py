"""Exception hierarchy shared by the library and the CLI.

Every exception carries an ``exit_code`` so the command-line frontend can map
failures to distinct process exit statuses without a lookup table.
"""

from __future__ import annotations


class OsmosisError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidImageError(OsmosisError, ValueError):
    exit_code = 3


class ShapeMismatchError(OsmosisError, ValueError):
    exit_code = 4


class TilingError(OsmosisError, ValueError):
    exit_code = 5


class PartitionError(OsmosisError, ValueError):
    exit_code = 6


class ConfigError(OsmosisError, ValueError):
    exit_code = 7


class ExplicitStabilityError(OsmosisError, ValueError):
    """Raised when an explicit step size exceeds the positivity bound."""

    exit_code = 8

    def __init__(self, tau: float, tau_max: float):
        self.tau = tau
        self.tau_max = tau_max
        super().__init__(f"tau={tau:g} exceeds explicit bound tau_max={tau_max:.17g}")


class ConvergenceError(OsmosisError, RuntimeError):
    """Raised when the Krylov solve misses its tolerance."""

    exit_code = 9

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"linear solve did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class SingularSystemError(OsmosisError, ArithmeticError):
    exit_code = 10

    def __init__(self, axis: str, line: int):
        self.axis = axis
        self.line = line
        super().__init__(f"singular tridiagonal system on {axis} line {line}")


class UnsupportedFormatError(OsmosisError, ValueError):
    exit_code = 11


class CalibrationError(OsmosisError, ValueError):
    exit_code = 12
