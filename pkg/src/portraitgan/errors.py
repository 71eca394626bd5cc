"""Exception hierarchy shared across the pipeline."""


class PortraitGanError(Exception):
    """Base class for all package errors."""


class ConfigError(PortraitGanError):
    pass


class DataError(PortraitGanError):
    """Bad input data: manifests, signal files, portrait files."""


class ManifestError(DataError):
    def __init__(self, message: str, line: int | None = None, token: str | None = None):
        self.line = line
        self.token = token
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PgmError(DataError):
    pass


class CheckpointError(DataError):
    pass


class ShapeError(PortraitGanError, ValueError):
    pass


class NumericError(PortraitGanError, ArithmeticError):
    """Non-finite values encountered (NaN loss, non-finite samples)."""
