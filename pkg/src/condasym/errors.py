"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration errors exit
with 2, data errors with 3, inference errors with 4.
"""


class CondasymError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(CondasymError):
    """Invalid flags, roles, parameters, or option combinations."""

    exit_code = 2


class DataError(CondasymError):
    """Malformed, non-numeric, non-finite, or insufficient input data."""

    exit_code = 3


class InferenceError(CondasymError):
    """A numerical stage failed (smoothing, profile assembly, testing)."""

    exit_code = 4


class ExtrapolationError(InferenceError):
    """Conditioning point lies far outside the support of the training data."""


class DegenerateDensityError(InferenceError):
    """A density estimate collapsed below the representable floor everywhere."""
