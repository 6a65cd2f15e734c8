"""
Scoring rules and run comparisons: MAE, interval score, weighted interval
score, percent improvement and windowed aggregation of matched records.
"""

import logging
import math
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import pandas as pd

from .errors import AsymmetricQuantiles, EmptyInput, NoOverlap, ZeroBaseline
from .series import EpidemicSeries, ForecastSet, ScoreRecord, resolve_origin

logger = logging.getLogger(__name__)

LEVEL_TOLERANCE = 1e-9


class WeightConvention(Enum):
    PAPER_LITERAL = "paper_literal"              # weights alpha_k, normalized by K + 1
    STANDARD_HALF_ALPHA = "standard_half_alpha"  # weights alpha_k / 2, median 1/2, normalized by K + 1/2


@dataclass(frozen=True)
class IntervalSpec:
    alpha: float
    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.lower > self.upper:
            raise ValueError(f"Interval lower bound {self.lower} exceeds upper bound {self.upper}")


@dataclass(frozen=True)
class WisConfig:
    """WIS weighting; interval_count, when set, is the K the quantiles must provide."""
    weight_convention: WeightConvention = WeightConvention.STANDARD_HALF_ALPHA
    interval_count: Optional[int] = None
    includes_median: bool = True

    def __post_init__(self):
        object.__setattr__(self, "weight_convention", WeightConvention(self.weight_convention))
        if self.interval_count is not None and self.interval_count < 0:
            raise ValueError(f"interval_count must be >= 0, got {self.interval_count}")


@dataclass(frozen=True)
class AggregationWindow:
    """Selects records by date range (origin or target date), location and horizon."""
    label: str
    start: Optional[date] = None
    end: Optional[date] = None
    locations: Optional[frozenset] = None
    horizons: Optional[frozenset] = None
    date_field: str = "target"

    def __post_init__(self):
        if self.start and self.end and self.start > self.end:
            raise ValueError(f"Window '{self.label}' starts after it ends")
        if self.date_field not in ("target", "origin"):
            raise ValueError(f"date_field must be 'target' or 'origin', got {self.date_field}")
        if self.locations is not None:
            object.__setattr__(self, "locations", frozenset(self.locations))
        if self.horizons is not None:
            object.__setattr__(self, "horizons", frozenset(int(h) for h in self.horizons))

    def select(self, frame: pd.DataFrame) -> pd.Series:
        """Boolean mask over a paired_frame."""
        mask = pd.Series(True, index=frame.index)
        if self.horizons is not None:
            mask &= frame["horizon"].isin(sorted(self.horizons))
        if self.locations is not None:
            mask &= frame["location"].isin(sorted(self.locations))
        when = frame["origin_date" if self.date_field == "origin" else "target_date"]
        if self.start:
            mask &= when >= self.start
        if self.end:
            mask &= when <= self.end
        return mask


OVERALL = AggregationWindow("overall")


@dataclass(frozen=True)
class ScoreRow:
    """One line of a comparison table."""
    window: str
    model: str
    base_mae: Optional[float]
    model_mae: Optional[float]
    abs_reduction: Optional[float]
    pct_improvement: Optional[float]
    n_records: int
    base_wis: Optional[float] = None
    model_wis: Optional[float] = None
    wis_pct_improvement: Optional[float] = None


@dataclass
class AggregateResult:
    rows: list
    matched: int
    unmatched_base: int
    unmatched_model: int


def mean_of(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def mae(pairs: Iterable[tuple]) -> float:
    """Mean absolute error of (observed, predicted) pairs."""
    errors = [abs(predicted - observed) for observed, predicted in pairs]
    if not errors:
        raise EmptyInput("MAE of zero pairs")
    return mean_of(errors)


def interval_score(y: float, spec: IntervalSpec) -> float:
    """Width plus 2/alpha times the distance by which y falls outside the interval."""
    score = spec.upper - spec.lower
    if y < spec.lower:
        score += 2.0 / spec.alpha * (spec.lower - y)
    elif y > spec.upper:
        score += 2.0 / spec.alpha * (y - spec.upper)
    return score


def central_intervals(quantiles: Mapping[float, float]) -> tuple:
    """Split quantiles into (median, [IntervalSpec, ...]) ordered from widest interval."""
    levels = sorted(quantiles)
    median_level = next((q for q in levels if abs(q - 0.5) <= LEVEL_TOLERANCE), None)
    if median_level is None:
        raise AsymmetricQuantiles(f"No median among levels {levels}")

    intervals = []
    used = {median_level}
    for q in levels:
        if q >= 0.5 - LEVEL_TOLERANCE:
            break
        partner = next((p for p in levels if abs(p - (1.0 - q)) <= LEVEL_TOLERANCE), None)
        if partner is None:
            raise AsymmetricQuantiles(f"Level {q} has no partner {1.0 - q}")
        used.update((q, partner))
        intervals.append(IntervalSpec(alpha=2.0 * q, lower=quantiles[q], upper=quantiles[partner]))

    if len(used) != len(levels):
        raise AsymmetricQuantiles(f"Unpaired levels: {sorted(set(levels) - used)}")
    return quantiles[median_level], intervals


def wis_components(y: float, quantiles: Mapping[float, float], cfg: WisConfig = WisConfig()) -> tuple:
    """(WIS, {alpha: interval score}) for one observation."""
    median, intervals = central_intervals(quantiles)
    if cfg.interval_count is not None and len(intervals) != cfg.interval_count:
        raise AsymmetricQuantiles(f"Expected {cfg.interval_count} intervals, found {len(intervals)}")

    scores = {spec.alpha: interval_score(y, spec) for spec in intervals}
    k = len(intervals)
    median_error = abs(y - median) if cfg.includes_median else 0.0

    if cfg.weight_convention is WeightConvention.PAPER_LITERAL:
        terms = [median_error] + [alpha * score for alpha, score in scores.items()]
        total = math.fsum(terms) / (k + 1)
    else:
        terms = [0.5 * median_error] + [alpha / 2.0 * score for alpha, score in scores.items()]
        total = math.fsum(terms) / (k + 0.5)
    return total, scores


def wis(y: float, quantiles: Mapping[float, float], cfg: WisConfig = WisConfig()) -> float:
    """Weighted interval score of the quantiles at one horizon."""
    return wis_components(y, quantiles, cfg)[0]


def percent_improvement(base_score: float, model_score: float) -> float:
    """Relative reduction of the model score against the base score, in percent."""
    if base_score == 0:
        raise ZeroBaseline("Percent improvement over a zero baseline")
    return (base_score - model_score) / base_score * 100.0


def score_forecast(truth: EpidemicSeries, fs: ForecastSet, cfg: WisConfig = WisConfig()) -> tuple:
    """
    ScoreRecords for every horizon of `fs` with realized truth.

    Returns (records, missing) where missing counts horizons beyond the truth.
    """
    origin = resolve_origin(truth, fs)
    records = []
    missing = 0
    for h in range(1, fs.horizon_count + 1):
        index = origin + h - 1
        if index >= len(truth) or index < 0:
            missing += 1
            continue
        observed = truth.values[index]
        wis_value, interval_scores = None, None
        if fs.quantiles:
            wis_value, interval_scores = wis_components(observed, fs.quantiles_at(h), cfg)
        records.append(ScoreRecord.build(
            origin_date=fs.origin_date,
            location=fs.location,
            horizon=h,
            observed=observed,
            predicted_point=fs.point[h - 1],
            target_date=fs.target_date(h),
            wis=wis_value,
            interval_scores=interval_scores,
            model=fs.model,
        ))
    return records, missing


def improvement_or_none(base: float, model: float, what: str, window: str) -> Optional[float]:
    try:
        return percent_improvement(base, model)
    except ZeroBaseline:
        logger.warning(f"Base {what} is zero in window '{window}': percent improvement undefined")
        return None


def paired_frame(base: Sequence[ScoreRecord], model: Sequence[ScoreRecord]) -> pd.DataFrame:
    """One row per matched key with both runs' absolute errors and WIS."""
    return pd.DataFrame({
        "origin_date": [b.origin_date for b in base],
        "target_date": [b.target_date or b.origin_date for b in base],
        "location": [b.location for b in base],
        "horizon": [b.horizon for b in base],
        "base_error": [b.absolute_error for b in base],
        "model_error": [m.absolute_error for m in model],
        "base_wis": [b.wis for b in base],
        "model_wis": [m.wis for m in model],
    })


def compare(frame: pd.DataFrame, window: AggregationWindow, model_name: str = "") -> ScoreRow:
    """Comparison row for the pairs of a paired_frame inside `window`."""
    selected = frame[window.select(frame)]
    if selected.empty:
        return ScoreRow(window.label, model_name, None, None, None, None, 0)

    # exact means (fsum)
    base_mae = mean_of(selected["base_error"])
    model_mae = mean_of(selected["model_error"])
    row = dict(
        window=window.label,
        model=model_name,
        base_mae=base_mae,
        model_mae=model_mae,
        abs_reduction=base_mae - model_mae,
        pct_improvement=improvement_or_none(base_mae, model_mae, "MAE", window.label),
        n_records=len(selected),
    )
    if selected[["base_wis", "model_wis"]].notna().all().all():
        base_wis = mean_of(selected["base_wis"])
        model_wis = mean_of(selected["model_wis"])
        row.update(
            base_wis=base_wis,
            model_wis=model_wis,
            wis_pct_improvement=improvement_or_none(base_wis, model_wis, "WIS", window.label),
        )
    return ScoreRow(**row)


def match_records(base_records: Sequence[ScoreRecord], model_records: Sequence[ScoreRecord]) -> tuple:
    """Pair records by (origin, location, horizon); returns (base, model, unmatched_base, unmatched_model)."""
    base_by_key = {r.key: r for r in base_records}
    model_by_key = {r.key: r for r in model_records}
    shared = sorted(set(base_by_key) & set(model_by_key))
    unmatched_base = len(base_by_key) - len(shared)
    unmatched_model = len(model_by_key) - len(shared)
    return ([base_by_key[k] for k in shared], [model_by_key[k] for k in shared],
            unmatched_base, unmatched_model)


def aggregate(base_records: Sequence[ScoreRecord], model_records: Sequence[ScoreRecord],
              windows: Sequence[AggregationWindow] = (OVERALL,), model_name: str = "") -> AggregateResult:
    """Per-window mean scores of two runs over their matching keys."""
    base, model, unmatched_base, unmatched_model = match_records(base_records, model_records)
    if not base:
        raise NoOverlap(
            f"No shared (origin, location, horizon) keys between {len(base_records)} base "
            f"and {len(model_records)} model records"
        )
    if unmatched_base or unmatched_model:
        logger.warning(
            f"Unmatched records: {unmatched_base} only in base, {unmatched_model} only in model"
        )

    frame = paired_frame(base, model)
    rows = [compare(frame, window, model_name) for window in windows]
    return AggregateResult(rows=rows, matched=len(base),
                           unmatched_base=unmatched_base, unmatched_model=unmatched_model)
