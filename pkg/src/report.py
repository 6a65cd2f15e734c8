"""Plot-ready breakdowns of MAE reduction by forecast date, location or horizon."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import NoOverlap
from .hub_io import PathLike, write_rows, format_value
from .scoring import improvement_or_none, match_records, mean_of, paired_frame
from .series import ScoreRecord

logger = logging.getLogger(__name__)

DIMENSIONS = ("forecast_date", "location", "horizon")
REPORT_COLUMNS = ["dimension", "key", "n_records", "base_mae", "model_mae", "abs_reduction", "pct_improvement"]


@dataclass(frozen=True)
class ReportRow:
    dimension: str
    key: str
    n_records: int
    base_mae: float
    model_mae: float
    abs_reduction: float
    pct_improvement: Optional[float]


_GROUP_COLUMNS = {"forecast_date": "origin_date", "location": "location", "horizon": "horizon"}


def breakdown(base_records: Sequence[ScoreRecord], model_records: Sequence[ScoreRecord],
              dimensions: Sequence[str] = DIMENSIONS) -> list[ReportRow]:
    """Mean absolute error of both runs grouped by each dimension, over matched keys."""
    base, model, _, _ = match_records(base_records, model_records)
    if not base:
        raise NoOverlap("Runs share no (origin, location, horizon) keys")

    frame = paired_frame(base, model)
    rows = []
    for dimension in dimensions:
        if dimension not in DIMENSIONS:
            raise ValueError(f"Unknown report dimension: {dimension}")
        grouped = frame.groupby(_GROUP_COLUMNS[dimension], sort=True).agg(
            n_records=("base_error", "size"),
            base_mae=("base_error", mean_of),
            model_mae=("model_error", mean_of),
        )
        for key, n_records, base_mae, model_mae in grouped.itertuples(name=None):
            base_mae, model_mae = float(base_mae), float(model_mae)
            rows.append(ReportRow(
                dimension=dimension,
                key=key.isoformat() if hasattr(key, "isoformat") else str(key),
                n_records=int(n_records),
                base_mae=base_mae,
                model_mae=model_mae,
                abs_reduction=base_mae - model_mae,
                pct_improvement=improvement_or_none(base_mae, model_mae, "MAE", f"{dimension}={key}"),
            ))
    logger.debug(f"Report breakdown: {len(rows)} rows over {len(frame)} matched records")
    return rows


def write_report(rows: Sequence[ReportRow], path: PathLike):
    lines = [
        [r.dimension, r.key, str(r.n_records), format_value(r.base_mae), format_value(r.model_mae),
         format_value(r.abs_reduction), format_value(r.pct_improvement)]
        for r in rows
    ]
    return write_rows(lines, REPORT_COLUMNS, path)
