"""Shared exception types."""


class ConfigError(Exception):
    """Experiment configuration is malformed or violates an invariant."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NumericsError(Exception):
    """A numerical routine failed to meet its documented tolerance."""
