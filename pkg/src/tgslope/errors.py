"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when inputs violate a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when a numerical routine fails (non-convergence, divergence)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergedError(NumericalError):
    """A solver produced a non-finite objective."""


class FormatError(IOError):
    """A file did not match the expected on-disk layout."""
