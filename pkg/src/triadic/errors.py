"""Exception types shared across the package."""


class TriadicError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TriadicError):
    """Tensor shapes are incompatible with the requested operation."""


class NumericError(TriadicError):
    """Non-finite values where finite ones are required."""


class ConfigError(TriadicError):
    """Invalid configuration value or unknown option."""


class DataError(TriadicError):
    """Dataset is empty, inconsistent, or otherwise unusable."""


class ParseError(TriadicError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
