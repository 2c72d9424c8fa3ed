"""Exception types shared across the package."""


class Gi0Error(Exception):
    """Base class for all package errors."""


class DomainError(Gi0Error, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ParameterError(Gi0Error, ValueError):
    """Inconsistent dimensions, sizes or option values."""


class SpecError(Gi0Error, ValueError):
    """Invalid mosaic or configuration specification."""


class FormatError(Gi0Error, ValueError):
    """A file does not follow its declared format."""


class IntegrityError(FormatError):
    """Checksum mismatch on a model file."""


class TrainingDiverged(Gi0Error, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}, batch {batch}")
