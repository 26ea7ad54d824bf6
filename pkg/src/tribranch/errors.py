"""Exception hierarchy shared by the library and the CLI."""


class TribranchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ArgumentError(TribranchError, ValueError):
    """An argument is out of its documented range (rank, k, layer index...)."""

    exit_code = 2


class FormatError(TribranchError, ValueError):
    """A checkpoint or image file is malformed."""

    exit_code = 3

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(TribranchError, ValueError):
    """Operand dimensions do not agree."""

    exit_code = 4


class InvalidInputError(TribranchError, ValueError):
    """Input data violates a precondition (e.g. non-finite entries)."""

    exit_code = 4


class InvalidParamsError(TribranchError, ValueError):
    """A parameter container violates its invariants."""

    exit_code = 4


class UnsupportedLayerError(TribranchError, TypeError):
    exit_code = 2


class NumericalError(TribranchError, ArithmeticError):
    """Non-convergence or a NaN/inf produced during computation."""

    exit_code = 5

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
