"""Exception types shared across the package."""


class XlcError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(XlcError):
    """Operands have incompatible shapes. The message carries both shapes."""


class NonNegativityError(XlcError):
    """A value violates a non-negativity requirement."""


class ConfigError(XlcError):
    """A configuration value is out of its legal range."""


class TrainingDivergedError(XlcError):
    """Loss became non-finite during iterative training."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DatasetFormatError(XlcError):
    """A dataset file failed to parse. The message carries the line number."""


class ModelFormatError(XlcError):
    """A model container is malformed, corrupted, or unsupported."""
