"""Exception hierarchy shared by all modules.

The CLI maps :class:`ConfigError` to exit code 2 and every
:class:`NumericError` subclass to exit code 3.
"""


class FreespecError(Exception):
    pass


class ConfigError(FreespecError, ValueError):
    """Bad user input: unknown field, wrong shape, parameter out of range."""


class NumericError(FreespecError, ArithmeticError):
    """A numerical procedure could not deliver a trustworthy answer."""


class SingularityError(NumericError):
    """An inverse or a logarithm was requested at a (numerically) singular point."""


class ConvergenceError(NumericError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class BranchError(NumericError):
    """Root or branch selection left the admissible region."""


class DivergenceError(NumericError):
    """A requested moment or series value does not exist."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order
