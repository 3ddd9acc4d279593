"""Exception hierarchy; the CLI maps these onto exit codes."""


class CongestionError(Exception):
    pass


class SchemaError(CongestionError, ValueError):
    """CSV header does not match the canonical schema."""

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class RowError(CongestionError, ValueError):
    """A data row could not be parsed."""

    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column}: {message}")
        self.row = row
        self.column = column


class ConfigError(CongestionError, ValueError):
    pass


class NumericalError(CongestionError, ArithmeticError):
    pass


class SingularMatrixError(NumericalError):
    def __init__(self, message: str, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConvergenceError(NumericalError):
    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = list(trace)
