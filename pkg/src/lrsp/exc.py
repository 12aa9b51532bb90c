"""
Exceptions raised in :mod:`lrsp`.

"""

import logging
import sys
from typing import Optional

from lrsp.typing import StrPath


class LRSError(Exception):
    """
    Generic error class.
    """


class ArgumentError(LRSError, ValueError):
    """
    Raised when arguments violate preconditions.

    For example, a rank budget larger than ``min(rows, cols)``,
    mismatched shapes, or RIP constants outside ``[0, 1)``.
    """


class OperatorTooLargeError(ArgumentError):
    """
    The requested measurement operator exceeds the configured memory cap.
    """

    def __init__(self, coefficients: int, limit: int):
        super().__init__(f"operator needs {coefficients} coefficients, limit is {limit}")
        self.coefficients = coefficients
        self.limit = limit


class ConvergenceError(LRSError):
    """
    A decomposition did not converge or missed its accuracy target.
    """

    message: str
    """Error message"""

    residual: float
    """Relative residual at failure, ``nan`` if unavailable"""

    def __init__(self, message: str = "", residual: float = float("nan")):
        super().__init__(message)
        self.message = message
        self.residual = residual

    def __repr__(self) -> str:
        return f"{type(self).__name__}(residual={self.residual!r}, message={self.message!r})"

    def __str__(self) -> str:
        return repr(self)


class SolverError(LRSError):
    """
    Hard failure inside a recovery solver.

    The error is usually raised because non-finite values appeared in the iterates.
    """

    message: str
    """Diagnostic message"""

    iteration: int
    """Iteration at which the failure was detected"""

    def __init__(self, message: str = "", iteration: int = 0):
        super().__init__(message)
        self.message = message
        self.iteration = iteration

    def __repr__(self) -> str:
        return f"{type(self).__name__}(iteration={self.iteration!r}, message={self.message!r})"

    def __str__(self) -> str:
        return repr(self)


class NoFixedPointError(LRSError):
    """
    An error recursion has no stable fixed point.

    Raised when the spectral radius of the recursion matrix is not below one.
    """

    def __init__(self, spectral_radius: float):
        super().__init__(f"spectral radius {spectral_radius:.6g} >= 1")
        self.spectral_radius = spectral_radius


class ParseError(LRSError):
    """
    Malformed input file.

    ``line`` is set for text formats (1-based), ``offset`` for binary formats.
    """

    message: str
    path: Optional[StrPath]
    line: Optional[int]
    offset: Optional[int]

    def __init__(
        self,
        message: str = "",
        path: Optional[StrPath] = None,
        *,
        line: Optional[int] = None,
        offset: Optional[int] = None,
    ):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line
        self.offset = offset

    def __repr__(self) -> str:
        where = ""
        if self.line is not None:
            where = f", line={self.line!r}"
        elif self.offset is not None:
            where = f", offset={self.offset!r}"
        return f"{type(self).__name__}(path={self.path!r}{where}, message={self.message!r})"

    def __str__(self) -> str:
        return repr(self)


def _add_note(
    ex: BaseException,
    note: str,
    *,
    logger: Optional[logging.Logger] = None,
    log_level: Optional[int] = None,
) -> None:
    """
    Add a note to exception if Python version >= 3.11 or record with logger
    """

    if sys.version_info >= (3, 11):
        ex.add_note(note)
        return

    # fallback to logging
    if logger is None:
        logger = logging.getLogger(f"{__name__}.note")

    if log_level is None:
        log_level = logging.WARNING

    logger.log(log_level, note, exc_info=ex)
