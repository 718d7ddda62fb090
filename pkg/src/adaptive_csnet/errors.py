"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An operation was called with inputs that violate its contract."""


class ParameterError(ValueError):
    """A configuration value is out of its supported range."""


class FormatError(ValueError):
    """A binary file could not be decoded.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedVersionError(FormatError):
    pass


class NumericalError(ArithmeticError):
    """Raised when an iterative procedure produces non-finite or diverging values."""
