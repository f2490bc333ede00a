"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (see :mod:`asymcity.cli`).
"""


class AsymCityError(Exception):
    """Base class for all package errors."""


class ParameterError(AsymCityError, ValueError):
    """A configuration or parameter value is out of its valid range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SchemaError(AsymCityError, ValueError):
    """A document does not match the expected file schema."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class ValidationError(AsymCityError, ValueError):
    """A well-formed object violates a semantic invariant."""


class DomainError(AsymCityError, ValueError):
    """An operation was called outside its mathematical domain."""


class NumericError(AsymCityError, ArithmeticError):
    """A computation produced non-finite values."""
