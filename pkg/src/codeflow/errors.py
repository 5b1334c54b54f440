"""Exception types shared across the package."""


class CodeflowError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(CodeflowError, ValueError):
    """An argument violates a documented precondition."""


class OutOfDomainError(InvalidArgumentError):
    """A time value falls outside the interval an operation is defined on."""


class DegenerateInputError(InvalidArgumentError):
    """Input is structurally valid but numerically unusable (e.g. zero norm)."""


class DimensionTooSmallError(InvalidArgumentError):
    """Codebook dimension too small for the requested number of classes."""


class FormatError(CodeflowError):
    """A file does not conform to its binary or textual format.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(CodeflowError, ArithmeticError):
    """A computation produced non-finite values or otherwise lost meaning."""


class ConfigError(CodeflowError):
    """An experiment configuration is malformed or inconsistent."""
