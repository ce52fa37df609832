"""Exception types shared across the package."""


class DualRainError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DualRainError, ValueError):
    pass


class TransmissionRangeViolation(DualRainError, ValueError):
    pass


class InvalidParams(DualRainError, ValueError):
    pass


class EmptyCorpus(DualRainError):
    pass


class ShapeMismatch(DualRainError, ValueError):
    pass


class IndivisibleChannels(ShapeMismatch):
    pass


class LevelTooLarge(ShapeMismatch):
    pass


class NonFiniteActivation(DualRainError, FloatingPointError):
    pass


class UnknownArch(DualRainError, KeyError):
    pass


class ArchMismatch(DualRainError, ValueError):
    pass


class NoRainPixels(DualRainError, ValueError):
    """Raised when an image has no detectable rain pixels to label from."""


class NoUsableSamples(DualRainError):
    pass


class TooSmall(DualRainError, ValueError):
    pass


class NameMismatch(DualRainError):
    pass


class CheckpointError(DualRainError):
    pass


class NonFiniteLoss(DualRainError, FloatingPointError):
    pass
