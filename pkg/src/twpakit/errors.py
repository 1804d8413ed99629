"""Exception types raised by the toolkit."""

from __future__ import annotations


class TwpaError(Exception):
    """Base class for all toolkit errors."""


class OperatingRangeError(TwpaError, ValueError):
    """Bias or frequency outside the physically valid range.

    Raised for flux biases where the linear inductance diverges and for
    frequencies at or above the plasma frequency (evanescent band).
    """


class ValidationError(TwpaError, ValueError):
    """Invalid argument, file content or configuration."""


class UnwrapError(TwpaError, ValueError):
    """Phase unwrapping is ambiguous on the supplied grid."""


class FitError(TwpaError, RuntimeError):
    """A fit failed to converge or the data are degenerate."""


class SimulationError(TwpaError, RuntimeError):
    """Time-domain or ODE integration failure.

    Carries ``step`` (time-step index) for transient blow-ups.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
