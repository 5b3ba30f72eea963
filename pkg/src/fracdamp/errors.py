"""Exception hierarchy shared by the labs and mapped to CLI exit codes."""


class FracDampError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(FracDampError, ValueError):
    """Invalid grid, profile, experiment or config parameters."""

    exit_code = 2

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NumericDomainError(FracDampError, ArithmeticError):
    """Non-finite values, poles, or numeric blow-up."""

    exit_code = 3


class ConvergenceError(FracDampError, RuntimeError):
    """An iterative eigensolver ran out of iterations."""

    exit_code = 4

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
