"""Exception types shared across the pipeline stages."""


class WSSLError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 2


class InvalidInputError(WSSLError, ValueError):
    """Input data violates a documented precondition."""

    exit_code = 2


class NumericalError(WSSLError, ArithmeticError):
    """A numerical routine failed (non-convergence, singularity, non-finite values)."""

    exit_code = 3

    def __init__(self, message, residual=None, iteration=None):
        super().__init__(message)
        self.residual = residual
        self.iteration = iteration


class ConfigError(WSSLError):
    """Bad configuration key or value."""

    exit_code = 1
