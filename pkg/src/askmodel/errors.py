"""Exception hierarchy shared across the package."""
from __future__ import annotations


class AskModelError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(AskModelError):
    """Dataset loading or selection construction failed."""


class ArgumentError(AskModelError):
    """An operation received an invalid argument."""


class ModelError(AskModelError):
    """Model training or persistence failed."""


class ParseError(AskModelError):
    """Operation-language parsing or validation failed.

    `position` is the zero-based index of the offending token when known.
    """

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class ConfigError(AskModelError):
    """Service configuration is invalid or incomplete."""
