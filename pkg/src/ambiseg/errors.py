"""Exception types shared across the package."""


class AmbisegError(Exception):
    """Base class for package errors."""


class DataError(AmbisegError):
    """Malformed input data: files, clouds, shapes, out-of-range values."""


class ConfigError(AmbisegError):
    """Invalid configuration key or value."""


class NumericError(AmbisegError):
    """Non-finite value where the training loop requires a finite one."""
