"""Exception hierarchy shared by the package and mapped to CLI exit codes."""


class DLNSGPRError(Exception):
    """Base class for all package errors."""


class ConfigError(DLNSGPRError, ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(DLNSGPRError, ValueError):
    """Input data is malformed or does not match a fitted artifact."""


class ParseError(DataError):
    """A line of a C-MAPSS text file could not be parsed."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class StructuralError(DataError):
    """Parsed data violates a structural invariant (ordering, counts)."""


class NumericalError(DLNSGPRError, ArithmeticError):
    """A numerical routine failed (non-PSD Gram matrix, non-finite values)."""


class TrainingDivergedError(NumericalError):
    """The network loss became non-finite during training."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
