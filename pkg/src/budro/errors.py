"""Exception hierarchy shared by the library and the command line."""


class BudroError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BudroError, ValueError):
    """Invalid or unknown configuration keys / values."""


class DataError(BudroError, ValueError):
    """Problems with input data."""


class SchemaError(DataError):
    pass


class LabelError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class DegenerateDirectionError(DataError):
    pass


class DegenerateCellError(DataError):
    pass


class UndefinedRateError(DataError):
    pass


class SolverError(BudroError, RuntimeError):
    """An optimization routine failed to produce a usable answer."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (boosting step {step})"
        super().__init__(message)
        self.step = step


class ConvergenceError(SolverError):
    pass


class NoRootError(SolverError):
    pass
