"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values or a matrix
    factorisation fails (unstable integration, diverging training, ...)."""


class NotFittedError(ValueError, AttributeError):
    """Raised when a model is used before ``fit``."""
