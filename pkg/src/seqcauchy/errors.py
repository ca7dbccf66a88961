"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class FactorizationError(ValueError):
    """A matrix expected to be positive definite failed Cholesky."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DataError(ValueError):
    """Unusable input data (unparseable rows, empty sessions, ...)."""


class ReplicationAbortError(RuntimeError):
    """Too many Monte Carlo replications failed."""
