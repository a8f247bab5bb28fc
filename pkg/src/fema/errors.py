"""Exception types shared across the package."""


class FemaError(Exception):
    """Base class for all package errors."""


class ConfigError(FemaError):
    """Invalid configuration value or structure."""


class ShapeError(FemaError):
    """Array shape does not match the declared contract."""


class UsageError(FemaError):
    """API called outside its contract (bad arguments, stale cache, ...)."""


class TrainingError(FemaError):
    """Training produced a non-finite loss or otherwise diverged."""


class CoherenceError(FemaError):
    """Embedding versions of records and stack snapshot disagree."""


class SerializationError(FemaError):
    """Binary snapshot/checkpoint is malformed or incompatible."""
