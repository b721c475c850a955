"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config document, roster or artifact set is inconsistent."""


class NumericalFailure(RuntimeError):
    """A solver or training routine produced non-finite or unusable numbers."""
