"""Exception types shared across the fitting modules."""


class ADDTError(Exception):
    """Base class for all errors raised by addtfit."""


class DataError(ADDTError, ValueError):
    """Input data is malformed or cannot support the requested analysis."""


class ConvergenceError(ADDTError, RuntimeError):
    """An iterative procedure failed to converge.

    The best point found so far is kept on ``best`` so callers can inspect
    or reuse it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
