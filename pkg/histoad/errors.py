from typing import Optional


class HistoadError(Exception):
    """Base class for errors that map onto a CLI exit code"""

    exit_code = 1


class ParameterError(HistoadError, ValueError):
    exit_code = 1


class ConfigurationError(HistoadError, ValueError):
    exit_code = 1


class ShapeError(HistoadError, ValueError):
    exit_code = 2


class DataError(HistoadError, ValueError):
    exit_code = 2


class ConvergenceError(HistoadError, RuntimeError):
    """Solver stopped at its iteration budget; `residual` is the last KKT violation"""

    exit_code = 3

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual
