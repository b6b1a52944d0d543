"""Exception hierarchy shared by all adelim modules."""


class AdelimError(Exception):
    """Base class for all library errors."""


class GridError(AdelimError):
    """Momentum-ladder construction or indexing failure (incommensurate
    wavevectors, bad window, shift outside the representable range)."""


class TruncationError(AdelimError):
    """Norm pushed past the ladder window exceeded the configured cap."""

    def __init__(self, message, lost_norm=None):
        super().__init__(message)
        self.lost_norm = lost_norm


class PoleError(AdelimError):
    """Closed-form expression evaluated at a singular denominator."""

    def __init__(self, message, denominator=None):
        super().__init__(message)
        self.denominator = denominator


class QuadratureError(AdelimError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SingularDetuningError(AdelimError):
    """Pulse-area normalisation requested with a zero reference detuning."""


class CalibrationError(AdelimError):
    """Amplitude calibration did not converge."""


class SingularOperatorError(AdelimError):
    """A matrix that must be inverted is singular."""


class DecompositionError(AdelimError):
    """Eigendecomposition unusable (defective matrix) and no fallback allowed."""


class ValidityError(AdelimError):
    """Adiabatic-elimination validity check failed hard (no manifold gap)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(AdelimError):
    """Scenario configuration malformed or inconsistent."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
