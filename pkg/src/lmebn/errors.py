"""Shared exception types, mapped to CLI exit codes."""


class LmebnError(Exception):
    """Base class for all package errors."""


class ConfigError(LmebnError):
    """Invalid experiment or command configuration (exit code 1)."""


class DataError(LmebnError):
    """Malformed input data: schema, missing values, labels (exit code 2)."""


class NumericError(LmebnError):
    """Numeric failure: singular systems, non-PD covariances (exit code 3)."""
