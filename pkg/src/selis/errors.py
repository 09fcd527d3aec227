"""Exception hierarchy shared by the library and the command-line tool."""


class SelisError(Exception):
    """Base class for all library errors."""


class UnsupportedOperationError(SelisError, ValueError):
    """Operation not defined for the given family or model."""


class DegenerateDataError(SelisError, ValueError):
    """Data cannot support the requested model (e.g. singular covariance)."""


class NumericalDegeneracyError(SelisError, FloatingPointError):
    """A Monte Carlo normalizer collapsed to zero."""


class BudgetExceededError(SelisError, RuntimeError):
    """Rejection sampler ran out of attempts before collecting ``n`` draws.

    The draws that were accepted are kept on ``partial``.
    """

    def __init__(self, message, partial, attempts):
        super().__init__(message)
        self.partial = partial
        self.attempts = attempts


class FitAbortedError(SelisError, RuntimeError):
    """A fitting routine stopped because of a non-finite or diverging state."""

    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace
