"""Exception types raised across the package."""


class PllkitError(Exception):
    """Base class for all package errors."""


class DataFormatError(PllkitError):
    """Malformed input file (bad CSV row, wrong IDX magic, truncation)."""


class ConsistencyError(PllkitError):
    """Structurally valid inputs that disagree with each other."""


class DomainError(PllkitError, ValueError):
    """Argument outside its documented domain."""


class SupportError(DomainError):
    """Weight mass placed outside the candidate-label support."""


class MissingTruthError(PllkitError):
    """Operation needs hidden true labels but the dataset carries none."""


class InsufficientDataError(PllkitError):
    """Too few rows for the requested statistic."""


class NumericError(PllkitError):
    """Non-finite value where a finite one is required."""


class DivergenceError(PllkitError):
    """Training risk became non-finite or exploded."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ConfigError(PllkitError):
    """Invalid experiment configuration."""
