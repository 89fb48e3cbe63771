"""Exception hierarchy shared across the package."""


class MetaCombineError(Exception):
    """Base class for all errors raised by metacombine."""


class InvalidInputError(MetaCombineError, ValueError):
    """Malformed or out-of-domain input."""


class InvalidGridError(InvalidInputError):
    """Grid step or size is not usable."""


class IncompatibleGridError(MetaCombineError, ValueError):
    """Two grid distributions do not share a step size."""


class InvalidConvolutionError(MetaCombineError, ValueError):
    """Convolution would combine an atom at +inf with one at -inf."""


class NumericDegradationError(MetaCombineError, ArithmeticError):
    """FFT roundoff produced more negative mass than the slack budget allows."""


class ConvergenceError(MetaCombineError, RuntimeError):
    """An iterative search failed to bracket its target."""


class ResolutionError(MetaCombineError):
    """The grid cannot resolve a requested quantile.

    Attributes
    ----------
    suggested_n : int
        A grid size that is expected to cover the quantile.
    """

    def __init__(self, message, suggested_n=None):
        super().__init__(message)
        self.suggested_n = suggested_n
