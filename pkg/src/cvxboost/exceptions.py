"""Exception hierarchy shared by every module of the package."""


class BoostError(Exception):
    """Base class for all package errors."""


class NumericalError(BoostError, ArithmeticError):
    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (index {index})")
        self.index = index


class ParseError(BoostError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(BoostError, ValueError):
    def __init__(self, message, column=None):
        super().__init__(message if column is None else f"column {column!r}: {message}")
        self.column = column


class EmptyDataset(BoostError, ValueError):
    pass


class CapacityError(BoostError, ValueError):
    pass


class ConfigError(BoostError, ValueError):
    pass


class AssumptionError(BoostError):
    pass


class CertificateError(BoostError):
    """A per-iteration inequality that must hold by theory was violated."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class UnboundedError(BoostError):
    pass


class DimensionError(BoostError, ValueError):
    pass


class UnsupportedGenerator(BoostError, ValueError):
    pass
