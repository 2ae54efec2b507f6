"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and
ContractError -> 3, TransportError -> 4.
"""


class FewtypeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FewtypeError):
    """Invalid configuration value, template pattern, or hyperparameter."""


class DataError(FewtypeError):
    """Malformed dataset file, label path, or checkpoint."""


class ContractError(FewtypeError):
    """An operation was called with arguments violating its preconditions."""


class TransportError(FewtypeError):
    """Provider unreachable or a request failed after retries (retryable)."""
