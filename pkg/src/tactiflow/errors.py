"""Exception taxonomy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2 (usage),
DataError / OSError -> 3 (I/O), NumericError -> 4.
"""


class TactiflowError(Exception):
    """Base class for all package errors."""


class ConfigError(TactiflowError):
    """Invalid configuration, parameters, or mismatched inputs."""


class DataError(TactiflowError):
    """Malformed or missing data files."""


class NumericError(TactiflowError):
    """Numerical failure (non-finite loss, singular systems where not allowed)."""
