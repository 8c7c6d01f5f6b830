"""Exception types shared across the package."""


class GaussUOTError(Exception):
    """Base class for all errors raised by gaussuot."""


class DimensionError(GaussUOTError, ValueError):
    """Shapes of the inputs do not agree."""


class DefinitenessError(GaussUOTError, ValueError):
    """A matrix that must be symmetric positive definite is not.

    The offending :class:`~gaussuot.linalg_spd.SpdCheck` is attached as
    ``check`` so callers can report the eigenvalue margin.
    """

    def __init__(self, message, check=None):
        super().__init__(message)
        self.check = check


class NumericalError(GaussUOTError, ArithmeticError):
    """An internal consistency check failed (corrupted floating point state)."""


class CertificateError(GaussUOTError):
    """The dual certificate cannot be evaluated (e.g. a divergent Gaussian integral)."""


class ConvergenceError(GaussUOTError):
    """An iterative solver ran out of iterations.

    ``last_iterate`` holds whatever state the solver had reached.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class QuadratureError(GaussUOTError):
    """Numerical quadrature produced non-finite values even after refinement."""


class ProblemFileError(GaussUOTError, ValueError):
    """A problem file is malformed or fails validation; the message names the field."""
