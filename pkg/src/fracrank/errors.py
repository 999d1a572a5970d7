"""Exception hierarchy shared by every fracrank module."""


class FracRankError(Exception):
    """Base class for all library errors."""


class DomainError(FracRankError, ValueError):
    """A closed-form expression was evaluated outside its domain."""


class ShapeError(FracRankError, ValueError):
    pass


class DegenerateError(FracRankError, ArithmeticError):
    """An input collapsed to a degenerate case (zero operator, zero matrix, ...)."""


class ConvergenceError(FracRankError, ArithmeticError):
    """An underlying factorization failed to converge."""


class NonFiniteError(FracRankError, ArithmeticError):
    """An iterate left the finite floating-point range."""


class PreconditionError(FracRankError, ValueError):
    pass


class FormatError(FracRankError, ValueError):
    """Malformed input file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
