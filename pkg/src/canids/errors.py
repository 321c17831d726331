"""Exception taxonomy shared across the package.

Everything derives from CanidsError so callers can catch package failures
in one clause. The CLI maps a subset of these to stable exit codes
(see cli.EXIT_CODES).
"""


class CanidsError(Exception):
    """Base class for all package errors."""


class ConfigError(CanidsError):
    """Invalid configuration value or combination."""


class DataError(CanidsError):
    """Input data unusable (empty set, label out of range, ...)."""


class IoError(CanidsError):
    """Source could not be read or destination could not be written."""


class ParseError(CanidsError):
    """Malformed content; carries row/column context where available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SchemaError(CanidsError):
    """File does not match the declared log schema."""


class ShapeError(CanidsError):
    """Array dimensions do not match what the operation requires."""


class NumericError(CanidsError):
    """Non-finite values where finite ones are required."""


class StateError(CanidsError):
    """Stale or mismatched internal state (e.g. backward with a foreign cache)."""


class SizeError(CanidsError):
    """Problem size exceeds what the algorithm can enumerate."""


class TrainingError(CanidsError):
    """Training failed; carries the loss trace up to the failure."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class NetError(CanidsError):
    """Socket-level failure (bind, connect)."""
