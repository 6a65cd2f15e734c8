"""
Reading and writing the CSV formats used by the toolkit.

Truth:     date,location,value
Forecasts: forecast_date,target,target_end_date,location,type,quantile,value  (hub format)
Theta:     forecast_date,location,theta,theta_scaled,objective_zero,objective_opt,origins_used
Scores:    per-record score files and comparison tables

Every writer formats values with six decimals and LF line endings so that
repeated runs produce byte-identical files.
"""

import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import (
    InconsistentHorizons,
    NonMonotoneDates,
    ParseError,
    UnparseableTarget,
)
from .scoring import ScoreRow
from .series import Cadence, EpidemicSeries, ForecastSet, ScoreRecord, validate_series

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRUTH_COLUMNS = ["date", "location", "value"]
HUB_COLUMNS = ["forecast_date", "target", "target_end_date", "location", "type", "quantile", "value"]
THETA_COLUMNS = ["forecast_date", "location", "theta", "theta_scaled",
                 "objective_zero", "objective_opt", "origins_used"]
RECORD_COLUMNS = ["origin_date", "location", "horizon", "target_end_date",
                  "observed", "predicted", "absolute_error", "wis", "model"]
SCORE_COLUMNS = ["window", "model", "base_mae", "model_mae", "abs_reduction", "pct_improvement",
                 "n_records", "base_wis", "model_wis", "wis_pct_improvement"]

TARGET_PATTERN = re.compile(r"^(\d+) (day|wk) ahead inc (?:flu )?hosp$")
_UNITS = {"day": Cadence.DAILY, "wk": Cadence.WEEKLY}


@dataclass(frozen=True)
class ThetaTraceRow:
    forecast_date: date
    location: str
    theta: float         # raw rate applied in the exponent
    theta_scaled: float  # normalized value
    objective_zero: float
    objective_opt: float
    origins_used: int


# --- formatting helpers ---

def format_value(value) -> str:
    return "" if value is None else f"{float(value):.6f}"


def format_level(level: float) -> str:
    return repr(float(level))


def _format_general(value) -> str:
    return "" if value is None else f"{float(value):.9g}"


def write_rows(rows: list, columns: list, path: Optional[PathLike]):
    """Write string rows as CSV; with path None the CSV text is returned instead."""
    frame = pd.DataFrame(rows, columns=columns, dtype=str)
    if path is None:
        return frame.to_csv(index=False, lineterminator="\n")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _read_strings(path: PathLike, columns: list) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(str(e), path=str(path)) from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"missing columns {missing}", line=1, path=str(path))
    return frame


def _parse_date(text: str, line: int, path: PathLike) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError as e:
        raise ParseError(f"invalid date '{text}'", line=line, path=str(path)) from e


def _parse_float(text: str, line: int, path: PathLike, allow_empty: bool = False) -> float:
    text = text.strip()
    if not text and allow_empty:
        return math.nan
    try:
        value = float(text)
    except ValueError as e:
        raise ParseError(f"invalid number '{text}'", line=line, path=str(path)) from e
    if not math.isfinite(value):
        raise ParseError(f"non-finite value '{text}'", line=line, path=str(path))
    return value


# --- truth ---

def _infer_cadence(dates: Sequence[date]) -> Cadence:
    gaps = [(b - a).days for a, b in zip(dates, dates[1:])]
    if gaps and all(g % 7 == 0 for g in gaps):
        return Cadence.WEEKLY
    return Cadence.DAILY


def ingest_truth_csv(path: PathLike) -> dict[str, EpidemicSeries]:
    """
    Load one gapless series per location.

    Interior gaps (missing dates or empty values) are filled by linear
    interpolation with a warning; leading and trailing gaps are trimmed.
    """
    frame = _read_strings(path, TRUTH_COLUMNS)
    observations = defaultdict(list)
    seen = {}

    for row_number, row in enumerate(frame.itertuples(index=False), start=2):
        location = row.location.strip()
        when = _parse_date(row.date, row_number, path)
        value = _parse_float(row.value, row_number, path, allow_empty=True)
        if (when, location) in seen:
            raise ParseError(
                f"duplicate row for {location} on {when} (first on line {seen[(when, location)]})",
                line=row_number, path=str(path),
            )
        seen[(when, location)] = row_number
        observations[location].append((when, value))

    result = {}
    for location in sorted(observations):
        rows = observations[location]
        dates = [d for d, _ in rows]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise NonMonotoneDates(location)

        cadence = _infer_cadence(dates)
        period = f"{cadence.days}D"
        values = pd.Series([v for _, v in rows], index=pd.DatetimeIndex(dates), dtype=float)
        full_index = pd.date_range(values.index[0], values.index[-1], freq=period)
        if not values.index.isin(full_index).all():
            raise ParseError(f"dates for {location} are off the {cadence.value} grid", path=str(path))
        values = values.reindex(full_index)

        observed = values.dropna()
        if observed.empty:
            logger.warning(f"No observed values for {location}: location skipped")
            continue
        values = values.loc[observed.index[0]:observed.index[-1]]
        gaps = int(values.isna().sum())
        if gaps:
            logger.warning(f"Interpolated {gaps} missing {cadence.value} values for {location}")
            values = values.interpolate(method="linear")

        series = EpidemicSeries(
            location=location,
            cadence=cadence,
            start_date=values.index[0].date(),
            values=tuple(values.to_numpy().tolist()),
        )
        result[location] = validate_series(series)

    logger.info(f"Loaded truth for {len(result)} locations from {path}")
    return result


def write_truth_csv(series: Union[Mapping[str, EpidemicSeries], Iterable[EpidemicSeries]],
                    path: PathLike) -> Path:
    items = series.values() if isinstance(series, Mapping) else series
    rows = []
    for s in sorted(items, key=lambda s: s.location):
        for when, value in zip(s.dates(), s.values):
            rows.append([when.isoformat(), s.location, format_value(value)])
    return write_rows(rows, TRUTH_COLUMNS, path)


# --- hub forecasts ---

def target_string(horizon: int, cadence: Cadence) -> str:
    return f"{horizon} {cadence.target_unit} ahead inc hosp"


def parse_target(target: str, line: int = None) -> tuple:
    """(horizon, cadence) from a target such as '7 day ahead inc hosp'."""
    match = TARGET_PATTERN.match(target.strip())
    if not match or int(match.group(1)) < 1:
        raise UnparseableTarget(target, line)
    return int(match.group(1)), _UNITS[match.group(2)]


def _assemble(key: tuple, rows: list) -> ForecastSet:
    forecast_date, location = key
    cadences = {cadence for _, _, cadence, *_ in rows}
    if len(cadences) != 1:
        raise InconsistentHorizons(f"{location} {forecast_date}: mixed day and week targets")
    cadence = cadences.pop()
    period = timedelta(days=cadence.days)

    origins = {end - h * period for _, h, _, end, _, _ in rows}
    if len(origins) != 1:
        raise InconsistentHorizons(
            f"{location} {forecast_date}: target end dates imply origins {sorted(origins)}"
        )
    origin_date = origins.pop()

    trajectories = defaultdict(dict)
    for line, h, _, _, level, value in rows:
        if h in trajectories[level]:
            raise InconsistentHorizons(f"{location} {forecast_date}: duplicate horizon {h} (line {line})")
        trajectories[level][h] = value

    k = max(h for _, h, *_ in rows)
    expected = set(range(1, k + 1))
    for level, by_horizon in trajectories.items():
        if set(by_horizon) != expected:
            what = "point" if level is None else f"quantile {level}"
            raise InconsistentHorizons(
                f"{location} {forecast_date}: {what} has horizons {sorted(by_horizon)}, expected 1..{k}"
            )

    levels = sorted(level for level in trajectories if level is not None)
    quantiles = None
    if levels:
        matrix = np.array([[trajectories[level][h] for h in range(1, k + 1)] for level in levels])
        ordered = np.sort(matrix, axis=0)
        repaired = int(np.count_nonzero(np.any(ordered != matrix, axis=0)))
        if repaired:
            logger.warning(f"Re-sorted crossing quantiles at {repaired} horizons for {location} {forecast_date}")
        quantiles = {level: tuple(ordered[i].tolist()) for i, level in enumerate(levels)}

    if None in trajectories:
        point = tuple(trajectories[None][h] for h in range(1, k + 1))
    elif quantiles and any(abs(level - 0.5) < 1e-9 for level in levels):
        median = next(level for level in levels if abs(level - 0.5) < 1e-9)
        point = quantiles[median]
    else:
        raise InconsistentHorizons(f"{location} {forecast_date}: no point rows and no median")

    return ForecastSet(
        location=location,
        origin_date=origin_date,
        point=point,
        quantiles=quantiles,
        cadence=cadence,
        forecast_date=forecast_date,
    )


def ingest_hub_forecasts(path: PathLike) -> list[ForecastSet]:
    """Group hub rows by (forecast_date, location) into forecast sets."""
    frame = _read_strings(path, HUB_COLUMNS)
    groups = defaultdict(list)

    for line, row in enumerate(frame.itertuples(index=False), start=2):
        horizon, cadence = parse_target(row.target, line)
        kind = row.type.strip()
        if kind == "point":
            level = None
        elif kind == "quantile":
            level = _parse_float(row.quantile, line, path)
            if not 0.0 < level < 1.0:
                raise ParseError(f"quantile level {level} outside (0, 1)", line=line, path=str(path))
        else:
            raise ParseError(f"unknown row type '{row.type}'", line=line, path=str(path))
        value = _parse_float(row.value, line, path)
        key = (_parse_date(row.forecast_date, line, path), row.location.strip())
        end = _parse_date(row.target_end_date, line, path)
        groups[key].append((line, horizon, cadence, end, level, value))

    sets = [_assemble(key, groups[key]) for key in sorted(groups)]
    logger.info(f"Loaded {len(sets)} forecast sets from {path}")
    return sets


def write_hub_forecasts(sets: Iterable[ForecastSet], path: PathLike) -> Path:
    rows = []
    ordered = sorted(sets, key=lambda fs: (fs.forecast_date, fs.location, fs.origin_date))
    for fs in ordered:
        for h in range(1, fs.horizon_count + 1):
            target = target_string(h, fs.cadence)
            end = fs.target_date(h).isoformat()
            rows.append([fs.forecast_date.isoformat(), target, end, fs.location,
                         "point", "", format_value(fs.point[h - 1])])
            for level in fs.levels:
                rows.append([fs.forecast_date.isoformat(), target, end, fs.location,
                             "quantile", format_level(level), format_value(fs.quantiles[level][h - 1])])
    return write_rows(rows, HUB_COLUMNS, path)


# --- theta trace ---

def write_theta_trace(rows: Iterable[ThetaTraceRow], path: PathLike) -> Path:
    lines = [
        [r.forecast_date.isoformat(), r.location, _format_general(r.theta), _format_general(r.theta_scaled),
         format_value(r.objective_zero), format_value(r.objective_opt), str(r.origins_used)]
        for r in sorted(rows, key=lambda r: (r.forecast_date, r.location))
    ]
    return write_rows(lines, THETA_COLUMNS, path)


def read_theta_trace(path: PathLike) -> list[ThetaTraceRow]:
    frame = _read_strings(path, THETA_COLUMNS)
    return [
        ThetaTraceRow(
            forecast_date=_parse_date(row.forecast_date, line, path),
            location=row.location,
            theta=_parse_float(row.theta, line, path),
            theta_scaled=_parse_float(row.theta_scaled, line, path),
            objective_zero=_parse_float(row.objective_zero, line, path),
            objective_opt=_parse_float(row.objective_opt, line, path),
            origins_used=int(row.origins_used),
        )
        for line, row in enumerate(frame.itertuples(index=False), start=2)
    ]


# --- scores ---

def write_score_records(records: Iterable[ScoreRecord], path: PathLike) -> Path:
    rows = [
        [r.origin_date.isoformat(), r.location, str(r.horizon),
         r.target_date.isoformat() if r.target_date else "",
         format_value(r.observed), format_value(r.predicted_point), format_value(r.absolute_error),
         format_value(r.wis), r.model]
        for r in sorted(records, key=lambda r: (r.key, r.model))
    ]
    return write_rows(rows, RECORD_COLUMNS, path)


def read_score_records(path: PathLike) -> list[ScoreRecord]:
    frame = _read_strings(path, RECORD_COLUMNS)
    records = []
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        wis = _parse_float(row.wis, line, path, allow_empty=True)
        records.append(ScoreRecord(
            origin_date=_parse_date(row.origin_date, line, path),
            location=row.location,
            horizon=int(row.horizon),
            observed=_parse_float(row.observed, line, path),
            predicted_point=_parse_float(row.predicted, line, path),
            absolute_error=_parse_float(row.absolute_error, line, path),
            target_date=_parse_date(row.target_end_date, line, path) if row.target_end_date else None,
            wis=None if math.isnan(wis) else wis,
            model=row.model,
        ))
    return records


def write_score_table(rows: Iterable[ScoreRow], path: PathLike) -> Path:
    lines = [
        [r.window, r.model, format_value(r.base_mae), format_value(r.model_mae),
         format_value(r.abs_reduction), format_value(r.pct_improvement), str(r.n_records),
         format_value(r.base_wis), format_value(r.model_wis), format_value(r.wis_pct_improvement)]
        for r in rows
    ]
    return write_rows(lines, SCORE_COLUMNS, path)
