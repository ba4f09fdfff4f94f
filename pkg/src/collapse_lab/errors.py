"""Exception types shared across the package."""


class CollapseLabError(Exception):
    """Base class for all package errors."""


class InvalidArgument(CollapseLabError, ValueError):
    pass


class UnsupportedNorm(InvalidArgument):
    """Raised for norm exponents outside the open interval (1, inf)."""


class NumericFailure(CollapseLabError, ArithmeticError):
    pass


class NonConverged(CollapseLabError):
    """An iterative solver ran out of budget.

    The last iterate and its residual are kept so callers can still inspect
    or export the partial result.
    """

    def __init__(self, message, last=None, residual=float("nan"), trace=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.trace = trace
