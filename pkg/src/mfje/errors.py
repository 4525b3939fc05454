"""Shared exception types."""


class MfjeError(Exception):
    """Base class for engine errors."""


class BoundViolationError(MfjeError):
    """A declared kernel bound was exceeded at runtime."""


class NonContractionError(MfjeError):
    """Fixed-point iteration stopped making progress."""


class ConfigError(MfjeError):
    """Invalid experiment configuration."""
