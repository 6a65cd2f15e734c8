"""
Domain types shared by every module: truth series, forecast sets, score records.

Counts are stored as floats (modulated and quantile values are fractional).
A series is gapless under its cadence: index i maps to start_date + i periods.
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .errors import (
    EmptySeries,
    InvalidForecast,
    NegativeValue,
    NonFiniteValue,
    OriginBeyondTruth,
)

logger = logging.getLogger(__name__)


class Cadence(Enum):
    """Reporting cadence of a series."""
    DAILY = "daily"
    WEEKLY = "weekly"

    @property
    def days(self) -> int:
        return 7 if self is Cadence.WEEKLY else 1

    @property
    def target_unit(self) -> str:
        """Unit used in hub target strings ("N day ahead ...", "N wk ahead ...")."""
        return "wk" if self is Cadence.WEEKLY else "day"


@dataclass(frozen=True)
class EpidemicSeries:
    """A dated, location-tagged, nonnegative univariate count series."""
    location: str
    cadence: Cadence
    start_date: date
    values: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def period(self) -> timedelta:
        return timedelta(days=self.cadence.days)

    @property
    def end_date(self) -> date:
        return self.date_at(len(self.values) - 1)

    def date_at(self, index: int) -> date:
        """Date of position `index` (may lie outside the observed range)."""
        return self.start_date + index * self.period

    def offset_of(self, when: date) -> int:
        """Position of `when` relative to start_date, without range checks."""
        delta = (when - self.start_date).days
        if delta % self.cadence.days != 0:
            raise ValueError(f"{when} is not on the {self.cadence.value} grid of {self.location}")
        return delta // self.cadence.days

    def index_of(self, when: date) -> int:
        """Position of an observed date; raises KeyError outside the series."""
        index = self.offset_of(when)
        if not 0 <= index < len(self.values):
            raise KeyError(f"{when} is outside the series for {self.location}")
        return index

    def dates(self) -> list[date]:
        return [self.date_at(i) for i in range(len(self.values))]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def head(self, n: int) -> "EpidemicSeries":
        """The first n observations (training data up to origin n)."""
        return EpidemicSeries(self.location, self.cadence, self.start_date, self.values[:n])

    def scaled(self, factor: float) -> "EpidemicSeries":
        return EpidemicSeries(self.location, self.cadence, self.start_date,
                              tuple(v * factor for v in self.values))


def validate_series(series: EpidemicSeries) -> EpidemicSeries:
    """Return the series unchanged if all invariants hold, otherwise raise."""
    if len(series.values) == 0:
        raise EmptySeries(series.location)
    for index, value in enumerate(series.values):
        if not math.isfinite(value):
            raise NonFiniteValue(index, value)
        if value < 0:
            raise NegativeValue(index, value)
    return series


@dataclass(frozen=True)
class ForecastSet:
    """
    Point trajectory plus optional quantile trajectories for horizons 1..k,
    issued after `origin_date` (the last observed date) for one location.

    origin_index is the number of truth observations the forecast conditions on;
    it is None for forecasts ingested from file until resolved against truth.
    forecast_date is the issue date written to hub files.
    """
    location: str
    origin_date: date
    point: tuple
    quantiles: Optional[Mapping[float, tuple]] = None
    origin_index: Optional[int] = None
    cadence: Cadence = Cadence.DAILY
    forecast_date: Optional[date] = None
    model: str = ""

    def __post_init__(self):
        point = tuple(float(v) for v in self.point)
        object.__setattr__(self, "point", point)
        if self.forecast_date is None:
            object.__setattr__(self, "forecast_date", self.origin_date + timedelta(days=1))

        k = len(point)
        if k < 1:
            raise InvalidForecast("Forecast set needs at least one horizon")
        _check_values(point, "point")

        if self.quantiles is not None:
            levels = sorted(float(q) for q in self.quantiles)
            normalized = {}
            for level in levels:
                if not 0.0 < level < 1.0:
                    raise InvalidForecast(f"Quantile level {level} outside (0, 1)")
                trajectory = tuple(float(v) for v in self.quantiles[level])
                if len(trajectory) != k:
                    raise InvalidForecast(
                        f"Quantile {level} has {len(trajectory)} horizons, point has {k}"
                    )
                _check_values(trajectory, f"quantile {level}")
                normalized[level] = trajectory
            if len(set(levels)) != len(levels):
                raise InvalidForecast("Quantile levels must be unique")
            for h in range(k):
                column = [normalized[level][h] for level in levels]
                if any(b < a for a, b in zip(column, column[1:])):
                    raise InvalidForecast(
                        f"Quantiles cross at horizon {h + 1} for {self.location} {self.origin_date}"
                    )
            object.__setattr__(self, "quantiles", normalized)

    @property
    def horizon_count(self) -> int:
        return len(self.point)

    @property
    def levels(self) -> tuple:
        return tuple(self.quantiles) if self.quantiles else ()

    def target_date(self, horizon: int) -> date:
        return self.origin_date + horizon * timedelta(days=self.cadence.days)

    def quantiles_at(self, horizon: int) -> dict[float, float]:
        """Quantile level -> value at a 1-based horizon."""
        if not self.quantiles:
            return {}
        return {level: values[horizon - 1] for level, values in self.quantiles.items()}

    def with_origin_index(self, origin_index: int) -> "ForecastSet":
        return _replace(self, origin_index=origin_index)

    def with_values(self, point, quantiles: Optional[Mapping[float, tuple]] = None) -> "ForecastSet":
        """Same set (location, dates, origin) carrying new values."""
        return _replace(self, point=tuple(point), quantiles=quantiles)

    def with_model(self, model: str) -> "ForecastSet":
        return _replace(self, model=model)

    def truncated(self, k: int) -> "ForecastSet":
        quantiles = None
        if self.quantiles:
            quantiles = {level: values[:k] for level, values in self.quantiles.items()}
        return _replace(self, point=self.point[:k], quantiles=quantiles)


def _replace(fs: ForecastSet, **changes) -> ForecastSet:
    fields = dict(
        location=fs.location,
        origin_date=fs.origin_date,
        point=fs.point,
        quantiles=fs.quantiles,
        origin_index=fs.origin_index,
        cadence=fs.cadence,
        forecast_date=fs.forecast_date,
        model=fs.model,
    )
    fields.update(changes)
    return ForecastSet(**fields)


def _check_values(values: tuple, what: str) -> None:
    for h, value in enumerate(values):
        if not math.isfinite(value):
            raise InvalidForecast(f"Non-finite {what} value at horizon {h + 1}")
        if value < 0:
            raise InvalidForecast(f"Negative {what} value {value} at horizon {h + 1}")


def resolve_origin(truth: EpidemicSeries, fs: ForecastSet) -> int:
    """Origin index of a forecast set in the truth series (observations conditioned on)."""
    if fs.origin_index is not None:
        return fs.origin_index
    return truth.offset_of(fs.origin_date) + 1


def align(truth: EpidemicSeries, fs: ForecastSet) -> list[tuple[float, float]]:
    """(observed, predicted) pairs for the horizons that have truth, in horizon order."""
    origin = resolve_origin(truth, fs)
    if origin > len(truth):
        raise OriginBeyondTruth(origin, len(truth))
    if origin < 0:
        raise ValueError(f"Forecast origin {fs.origin_date} precedes truth start {truth.start_date}")
    available = min(fs.horizon_count, len(truth) - origin)
    return [(truth.values[origin + h], fs.point[h]) for h in range(available)]


@dataclass(frozen=True)
class ScoreRecord:
    """Evaluation of one (origin, location, horizon) forecast against truth."""
    origin_date: date
    location: str
    horizon: int
    observed: float
    predicted_point: float
    absolute_error: float
    target_date: Optional[date] = None
    wis: Optional[float] = None
    interval_scores: Optional[Mapping[float, float]] = field(default=None, compare=False)
    model: str = ""

    @classmethod
    def build(
        cls,
        origin_date: date,
        location: str,
        horizon: int,
        observed: float,
        predicted_point: float,
        target_date: Optional[date] = None,
        wis: Optional[float] = None,
        interval_scores: Optional[Mapping[float, float]] = None,
        model: str = "",
    ) -> "ScoreRecord":
        return cls(
            origin_date=origin_date,
            location=location,
            horizon=horizon,
            observed=float(observed),
            predicted_point=float(predicted_point),
            absolute_error=abs(float(predicted_point) - float(observed)),
            target_date=target_date,
            wis=wis,
            interval_scores=interval_scores,
            model=model,
        )

    @property
    def key(self) -> tuple:
        return (self.origin_date, self.location, self.horizon)
