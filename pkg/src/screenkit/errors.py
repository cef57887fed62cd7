"""Exception types shared across the toolkit."""


class ScreenkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ScreenkitError):
    """Raised for malformed images or unsupported channel layouts."""


class ValidationError(ScreenkitError):
    """Raised when inputs violate a documented precondition."""


class CurveUndefinedError(ValidationError):
    """Raised when a ROC/PR curve is requested for single-class data."""


class InsufficientDataError(ValidationError):
    """Raised when a statistic needs more samples than were provided."""


class InferenceError(ScreenkitError):
    """Raised when a resampling procedure cannot produce an estimate."""


class ConfigurationError(ScreenkitError):
    """Raised for invalid run configuration (bad flags, missing tau, ...)."""
