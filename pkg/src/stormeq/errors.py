"""Exception hierarchy shared across the package."""


class StormeqError(Exception):
    """Base class for all stormeq errors."""


class ParseError(StormeqError):
    """Malformed expression text. Carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(StormeqError):
    """Evaluation failed structurally (e.g. unbound variable)."""


class ProgramError(StormeqError):
    """Expression cannot be compiled to a kernel program."""


class DatasetError(StormeqError):
    """Data file could not be ingested or repaired."""


class SearchError(StormeqError):
    """Invalid search configuration or training data."""


class ForecastError(StormeqError):
    """Forecast preconditions violated (coverage, horizon, finiteness)."""


class EvaluateError(StormeqError):
    """Metric or benchmark preconditions violated."""


class ConfigError(StormeqError):
    """Configuration file invalid (unknown key, bad value)."""
