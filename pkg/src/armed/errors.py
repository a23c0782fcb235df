"""Exception types raised across the package."""


class ArmedError(Exception):
    """Base class for all package errors."""


class DimensionError(ArmedError, ValueError):
    """Array shapes do not agree with a layer or model."""


class StateError(ArmedError, RuntimeError):
    """An operation was called before its prerequisites exist."""


class NumericError(ArmedError, FloatingPointError):
    """A non-finite value appeared in a named quantity."""

    def __init__(self, name, message=None):
        self.name = name
        super().__init__(message or f"non-finite value in {name!r}")


class ConfigError(ArmedError, ValueError):
    """Invalid configuration or hyperparameter."""


class InputError(ArmedError, ValueError):
    """Invalid data passed to an operation."""


class UndefinedMetricError(ArmedError, ValueError):
    """A metric is undefined for the given labels (e.g. one class only)."""
