"""Exception types shared across the package.

The CLI maps ConfigError to exit code 2 and NumericalError (and its
subclasses) to exit code 3.
"""


class MeanFieldError(Exception):
    """Base class for package errors."""


class ConfigError(MeanFieldError):
    """Invalid or incomplete experiment configuration."""


class NumericalError(MeanFieldError):
    """A computation left its domain of validity."""


class DomainError(NumericalError):
    """Evaluation outside an operation's mathematical domain."""


class DimensionMismatch(MeanFieldError):
    """Operands with incompatible phase-space dimensions."""


class CollisionError(NumericalError):
    """Point vortices closer than the collision threshold."""

    def __init__(self, time: float, min_distance: float):
        self.time = time
        self.min_distance = min_distance
        super().__init__(
            f"vortex collision at t={time:.6g} (min distance {min_distance:.3e})"
        )


class BlowUpError(NumericalError):
    """Solution magnitude exceeded the overflow guard."""


class NonConvergenceError(NumericalError):
    """Iteration failed to converge within its limit."""

    def __init__(self, message: str, deviations=None):
        self.deviations = list(deviations) if deviations is not None else []
        super().__init__(message)


class UnsupportedKernelError(MeanFieldError):
    """Operation not defined for this kernel kind."""


class LipschitzCertificateError(MeanFieldError):
    """A candidate dual function failed its 1-Lipschitz certificate."""

    def __init__(self, pair, quotient: float):
        self.pair = pair
        self.quotient = quotient
        super().__init__(
            f"difference quotient {quotient:.12g} > 1 between {pair[0]} and {pair[1]}"
        )
