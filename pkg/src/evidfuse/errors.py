"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class EvidFuseError(Exception):
    """Base class for all package errors."""


class ConfigError(EvidFuseError):
    """Invalid or inconsistent run configuration."""


class DataError(EvidFuseError):
    """Malformed, missing, or inconsistent input data."""


class NumericalError(EvidFuseError):
    """A numerical operation produced an unusable result."""


class TotalConflictError(NumericalError):
    """Dempster combination of fully contradictory evidence (1 - conflict ~ 0)."""


class TrainingDivergedError(NumericalError):
    """Training produced a non-finite loss; last good parameters are attached."""

    def __init__(self, message, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history
