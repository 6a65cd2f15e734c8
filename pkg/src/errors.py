"""
Exception hierarchy for the epimodulation toolkit.

Every error raised on purpose by the package derives from EpimodError so the CLI
can turn it into a one-line diagnostic.
"""

from typing import Optional


class EpimodError(Exception):
    """Base class for all package errors."""


# --- Series and forecast validation ---

class SeriesError(EpimodError):
    """A truth series violates its invariants."""


class EmptySeries(SeriesError):
    def __init__(self, location: str = ""):
        self.location = location
        super().__init__(f"Series for location '{location}' is empty")


class NegativeValue(SeriesError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"Negative value {value} at index {index}")


class NonFiniteValue(SeriesError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"Non-finite value {value} at index {index}")


class InvalidForecast(EpimodError):
    """A forecast set violates its invariants (lengths, levels, monotonicity)."""


class OriginBeyondTruth(EpimodError):
    def __init__(self, origin_index: int, truth_length: int):
        self.origin_index = origin_index
        self.truth_length = truth_length
        super().__init__(
            f"Forecast origin {origin_index} lies beyond the truth series (length {truth_length})"
        )


class InvalidParameters(EpimodError):
    """Simulator or forecaster parameters are out of range."""


# --- Forecasting and modulation ---

class InsufficientHistory(EpimodError):
    def __init__(self, needed: int, available: int, what: str = "history"):
        self.needed = needed
        self.available = available
        super().__init__(f"Insufficient {what}: need {needed}, have {available}")


class NegativeForecastInput(EpimodError):
    def __init__(self, index: int, value: float):
        self.index = index
        super().__init__(f"Cannot modulate negative forecast value {value} at horizon {index + 1}")


class NoQuantiles(EpimodError):
    """Quantile modulation was requested for a forecast set without quantiles."""


class NoRetrospectiveOrigins(EpimodError):
    """Theta must be estimated but no forecast origin has realized truth."""


# --- Scoring ---

class EmptyInput(EpimodError):
    """A score was requested over no observations."""


class ZeroBaseline(EpimodError):
    """Percent improvement is undefined for a zero baseline score."""


class AsymmetricQuantiles(EpimodError):
    """Quantile levels cannot be paired into central intervals with a median."""


class NoOverlap(EpimodError):
    """Two runs share no (origin, location, horizon) keys."""


# --- File ingestion ---

class ParseError(EpimodError):
    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        self.line = line
        self.path = path
        where = f"{path}:{line}" if path and line else (f"line {line}" if line else path)
        super().__init__(f"{where}: {message}" if where else message)


class NonMonotoneDates(EpimodError):
    def __init__(self, location: str):
        self.location = location
        super().__init__(f"Dates for location '{location}' are not strictly increasing")


class UnparseableTarget(EpimodError):
    def __init__(self, target: str, line: Optional[int] = None):
        self.target = target
        self.line = line
        suffix = f" (line {line})" if line else ""
        super().__init__(f"Cannot parse forecast target '{target}'{suffix}")


class InconsistentHorizons(EpimodError):
    """Rows grouped into one forecast set do not form horizons 1..k consistently."""


# --- Configuration ---

class ConfigError(EpimodError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")
