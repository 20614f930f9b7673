"""Exception types shared across the library."""


class ShaplabError(Exception):
    """Base class for library-specific failures."""


class BudgetError(ShaplabError):
    """An evaluation budget is too small, or an enumeration is too large."""


class ConfigError(ShaplabError):
    """A config file or CLI invocation is malformed."""


class DataError(ShaplabError):
    """A dataset or model file cannot be read or fails validation."""


class NumericalError(ShaplabError):
    """A linear-algebra step failed (non-PSD covariance, failed conditioning)."""
