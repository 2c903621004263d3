"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error types should
subclass one of the three mid-level categories below.
"""


class EmikitError(Exception):
    """Base class for all package errors."""


class ConfigError(EmikitError):
    """Invalid configuration value or malformed config file (exit code 2)."""


class DataError(EmikitError):
    """Invalid on-disk data (exit code 3)."""


class FormatError(DataError):
    """Malformed feature file, manifest, or checkpoint archive."""


class ValidationError(DataError):
    """Sample or split content violates a dataset invariant."""


class NumericError(EmikitError):
    """Runtime numeric failure, e.g. non-finite loss (exit code 4)."""


class ShapeError(EmikitError):
    """Tensor operands with incompatible shapes."""


class DegenerateMaskError(EmikitError):
    """Softmax or pooling requested over an all-masked sequence."""


class TapeError(EmikitError):
    """Backward invoked on an empty or already-consumed tape."""
