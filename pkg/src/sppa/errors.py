"""Exception types shared across the package."""


class SPPAError(Exception):
    """Base class for all package errors."""


class TagMismatchError(SPPAError, TypeError):
    """A point does not belong to the space it is used with."""


class InvalidPointError(SPPAError, ValueError):
    """A point violates an invariant of its space (sheet constraint, negative radius, ...)."""


class DomainError(SPPAError, ValueError):
    """An argument is outside the domain of an operation."""


class ConfigError(SPPAError, ValueError):
    """An experiment or run configuration is inconsistent or rejected."""


class UnsupportedProblemError(SPPAError):
    """No baseline method is available for the requested problem."""
