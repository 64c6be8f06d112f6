"""Shared exception types."""


class ShapeError(ValueError):
    """Raised when tensor shapes do not line up."""


class ConfigError(ValueError):
    """Raised for invalid configuration values (bad eps, alpha, kernel size, ...)."""


class DatasetError(IOError):
    """Raised when a dataset on disk is missing or corrupt; names the offending sample."""


class CheckpointError(IOError):
    """Raised when a checkpoint directory is incomplete or inconsistent."""


class TrainingError(RuntimeError):
    """Raised when training must abort (e.g. a non-finite loss or gradient)."""
