"""Exception hierarchy shared across the package.

Two branches matter for the CLI exit codes: :class:`ConfigError` covers
invalid user input (exit code 2), :class:`NumericalError` covers runtime
numerical failures (exit code 3).
"""


class CrControlError(Exception):
    """Base class for all package errors."""


class ConfigError(CrControlError):
    """Invalid configuration or input file."""


class NumericalError(CrControlError):
    """Numerical failure while evaluating a model."""


class DimensionError(NumericalError):
    """Matrix arguments with incompatible or non-square shapes."""


class SingularMatrixError(NumericalError):
    """Linear solve hit a (near-)singular matrix.

    Carries the offending pivot magnitude, and the frequency at which the
    matrix was formed when that is known.
    """

    def __init__(self, message, pivot=0.0, omega=None):
        super().__init__(message)
        self.pivot = pivot
        self.omega = omega


class BracketError(NumericalError):
    """Root bracket does not contain a sign change."""


class LengthError(NumericalError):
    """Sample buffer has an unsupported length."""


class PoleError(NumericalError):
    """Frequency response requested exactly at a pole."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class RealizationError(NumericalError):
    """Transfer function cannot be realized in state space."""


class NormalizationError(NumericalError):
    """Loop gain cannot be normalized at the requested frequency."""


class SimConfigError(ConfigError):
    """Hybrid simulation configuration violates its invariants."""


class TransientError(NumericalError):
    """Simulated response did not reach a periodic steady state."""


class InstabilityError(NumericalError):
    """Closed-loop simulation diverged."""


class BlsUnstableError(NumericalError):
    """Base linear system is unstable, so the frequency-domain test is void."""


class DesignError(NumericalError):
    """Requested element parameters are unachievable.

    ``max_achievable_pa`` reports the largest phase advantage (degrees) the
    requested corner-frequency ratio supports.
    """

    def __init__(self, message, max_achievable_pa=None):
        super().__init__(message)
        self.max_achievable_pa = max_achievable_pa


class FrfParseError(ConfigError):
    """Malformed measured frequency-response file."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class FitQualityWarning(UserWarning):
    """Model fit stagnated; the best-so-far result was returned."""
