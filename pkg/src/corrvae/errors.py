"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class CorrVaeError(Exception):
    """Base class for all package errors."""


class ConfigError(CorrVaeError):
    """Invalid or inconsistent configuration."""


class DataError(CorrVaeError):
    """Input data violates a contract (missing file, bad cell, bad shape)."""


class NumericalError(CorrVaeError):
    """Numerical failure: divergence, non-convergence, invalid matrix."""
