"""Exceptions shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration value. `key` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class BudgetExhausted(Exception):
    """No affordable action remains; the caller retires the edge or terminates."""


class BudgetViolation(RuntimeError):
    """A charge exceeded the remaining budget; indicates a caller bug."""
