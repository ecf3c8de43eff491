"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    """Matrix shapes are incompatible."""


class ParseError(ValidationError):
    """A row of an input file could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(ValidationError):
    """The input source contained no data rows."""


class OutOfRangeError(IndexError):
    """Requested slice extends past the end of a sequence."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training.

    ``record`` carries the epoch, window start and loss terms of the
    offending batch.
    """

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record
