"""
Epimodulation of forecasts produced elsewhere (e.g. a hub ensemble file).

theta for each (location, forecast date) comes from that source's own earlier
forecasts whose targets have been observed, or from a fixed value.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .epimod import ModulationMode, Theta, ThetaOptions, fit_theta, history_burden_at, modulate_set
from .errors import InvalidForecast, NoRetrospectiveOrigins
from .hub_io import ThetaTraceRow, ingest_hub_forecasts, ingest_truth_csv, write_hub_forecasts, write_theta_trace
from .series import EpidemicSeries, ForecastSet

logger = logging.getLogger(__name__)


@dataclass
class ModulateResult:
    sets: list = field(default_factory=list)
    theta_rows: list = field(default_factory=list)
    estimated: int = 0
    unestimated: int = 0


def _with_origin(truth: EpidemicSeries, fs: ForecastSet) -> ForecastSet:
    try:
        origin = truth.offset_of(fs.origin_date) + 1
    except ValueError as e:
        raise InvalidForecast(str(e)) from None
    if origin < 1:
        raise InvalidForecast(
            f"Forecast origin {fs.origin_date} precedes the first truth date "
            f"{truth.start_date} for {fs.location}"
        )
    return fs.with_origin_index(origin)


def retrospective_sets(target: ForecastSet, candidates: Sequence[ForecastSet], truth: EpidemicSeries,
                       realtime: bool = True) -> list[ForecastSet]:
    """
    Earlier forecasts usable to fit theta for `target`.

    Every candidate must have its whole window inside the truth. In real-time
    mode its window must also end on or before the target's origin date.
    """
    usable = []
    for fs in candidates:
        if fs.origin_index < 0 or fs.origin_index + fs.horizon_count > len(truth):
            continue
        if realtime and fs.target_date(fs.horizon_count) > target.origin_date:
            continue
        usable.append(fs)
    return usable


def modulate_forecasts(sets: Sequence[ForecastSet], truth: dict[str, EpidemicSeries],
                       mode: ModulationMode = ModulationMode(),
                       options: ThetaOptions = ThetaOptions(),
                       realtime: bool = True) -> ModulateResult:
    """Modulate every set, estimating theta per (location, forecast date) unless it is fixed."""
    result = ModulateResult()
    by_location: dict[str, list] = {}
    for fs in sets:
        by_location.setdefault(fs.location, []).append(fs)

    for location in sorted(by_location):
        series = truth.get(location)
        if series is None:
            raise NoRetrospectiveOrigins(f"No truth for location '{location}'")
        located = sorted((_with_origin(series, fs) for fs in by_location[location]),
                         key=lambda fs: (fs.origin_date, fs.forecast_date))

        for fs in located:
            available = series.head(min(fs.origin_index, len(series))) if realtime else series
            if len(available) == 0 or max(available.values) <= 0:
                scale = 1.0
            else:
                scale = max(available.values)

            usable = retrospective_sets(fs, located, series, realtime)
            theta, origins_used, zero, opt = Theta(0.0, scale), 0, 0.0, 0.0
            if usable:
                estimate = fit_theta(available, usable, mode, options)
                theta, origins_used = estimate.theta, estimate.origins_used
                zero, opt = estimate.objective_at_zero, estimate.objective_at_optimum
                if options.fixed_theta is None:
                    result.estimated += 1
            elif options.fixed_theta is not None:
                theta = Theta(options.fixed_theta, scale)
            else:
                logger.warning(f"No retrospective forecasts for {location} {fs.forecast_date}: theta left at 0")
                result.unestimated += 1

            burden = history_burden_at(series, min(fs.origin_index, len(series))) if mode.include_history else 0.0
            modulated = modulate_set(fs, theta, mode, burden)
            result.sets.append(modulated.with_origin_index(None))
            result.theta_rows.append(ThetaTraceRow(
                forecast_date=fs.forecast_date,
                location=location,
                theta=theta.raw,
                theta_scaled=theta.value,
                objective_zero=zero,
                objective_opt=opt,
                origins_used=origins_used,
            ))

    if options.fixed_theta is None and sets and result.estimated == 0:
        raise NoRetrospectiveOrigins("No forecast set in the file has retrospective origins with realized truth")
    return result


def modulate_file(forecasts_path, truth_path, out_path,
                  mode: ModulationMode = ModulationMode(),
                  options: ThetaOptions = ThetaOptions(),
                  realtime: bool = True,
                  theta_trace_path: Optional[Path] = None) -> ModulateResult:
    """Read a hub forecast file and truth, write the epimodulated hub file."""
    sets = ingest_hub_forecasts(forecasts_path)
    truth = ingest_truth_csv(truth_path)
    result = modulate_forecasts(sets, truth, mode, options, realtime)

    write_hub_forecasts(result.sets, out_path)
    if theta_trace_path:
        write_theta_trace(result.theta_rows, theta_trace_path)
    logger.info(
        f"Modulated {len(result.sets)} forecast sets ({result.estimated} with estimated theta, "
        f"{result.unestimated} left unmodulated) into {out_path}"
    )
    return result
