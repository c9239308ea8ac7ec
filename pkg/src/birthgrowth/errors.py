class BirthGrowthError(Exception):
    """Base class for package errors."""


class ConfigError(BirthGrowthError, ValueError):
    """Invalid model, growth or experiment configuration."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DomainError(BirthGrowthError, ValueError):
    """Argument outside the domain of an operation."""


class UnsupportedAnalyticError(BirthGrowthError):
    """No closed-form intensity exists for a history-dependent nucleation kind."""
