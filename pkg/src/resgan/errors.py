"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class BroadcastError(ShapeError):
    """Binary elementwise operands cannot be broadcast together."""


class DomainError(ValueError):
    """An input value lies outside the mathematical domain of the operation."""


class ContractError(RuntimeError):
    """A documented precondition of an operation was violated by the caller."""


class ConfigError(ValueError):
    """A model or run configuration is invalid."""


class FormatError(ValueError):
    """A binary dataset file does not match its declared format."""


class IoError(OSError):
    """An output path could not be written."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite during training.

    Carries the epoch at which divergence was detected and the partial
    training log collected up to (not including) that epoch.
    """

    def __init__(self, epoch, log=None):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.log = log
