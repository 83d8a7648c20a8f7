"""Error taxonomy shared across library and CLI.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class SpdtsimError(Exception):
    """Base class for all package errors."""


class ConfigError(SpdtsimError):
    """Invalid, inconsistent, or unknown configuration."""


class DataError(SpdtsimError):
    """Invalid input data or violated data-model invariant."""


class NumericError(SpdtsimError):
    """Non-finite or out-of-domain numeric result."""
