"""Exception hierarchy shared across the package."""


class NgramDPError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NgramDPError, ValueError):
    """Invalid parameters or configuration.

    ``field`` names the offending configuration key when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DataError(NgramDPError, ValueError):
    """Malformed input data or an impossible request against the data."""


class AdjacencyError(DataError, KeyError):
    """Requested adjacent database for a user that is not present."""

    def __str__(self):
        return Exception.__str__(self)


class NumericalError(NgramDPError, ArithmeticError):
    """A quantity is undefined or non-finite (e.g. an infinite divergence)."""
