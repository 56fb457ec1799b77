"""Exception types shared across the package."""


class InvalidHistoryError(ValueError):
    """Memory data whose history integral diverges or violates the decay
    hypothesis required by the mild-solution representation."""


class ContainmentError(RuntimeError):
    """Too much mass near an artificial boundary for the run to be trusted."""


class InsufficientDataError(ValueError):
    """Not enough resolved points for a requested fit."""
