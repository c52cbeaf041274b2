"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration value or key."""


class InputDomainError(ValueError):
    """Input outside the documented domain of an operation."""


class CorruptStreamError(ValueError):
    """A token stream that cannot be decoded back to bytes."""


class InsufficientDataError(RuntimeError):
    """Retryable: not enough stored data to serve the request yet."""
