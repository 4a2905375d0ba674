"""Exception types shared across the package."""


class SemvidError(Exception):
    """Base class for all package errors."""


class DimensionError(SemvidError, ValueError):
    """Array shapes are inconsistent or violate a divisibility requirement."""


class ConfigError(SemvidError, ValueError):
    """A configuration value is missing or invalid."""


class DecodeError(SemvidError):
    """A payload could not be parsed (truncated, corrupt header, bad magic)."""
