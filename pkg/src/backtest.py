"""
Rolling-origin backtests.

For every location and forecaster the runner fits the base model at each
origin, estimates theta from that location's history up to the origin and
emits base and epimodulated forecasts side by side, then scores both arms.

Work happens in two phases on a bounded thread pool: first every needed
(location, forecaster, origin) forecast is produced once and cached, then
theta is estimated per outer origin from the cached cross-validation
forecasts. A failing cell is logged and recorded, never fatal.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from .epimod import (
    Theta,
    ThetaEstimate,
    ThetaOptions,
    estimate_theta,
    history_burden_at,
    modulate_set,
)
from .errors import EpimodError, InsufficientHistory, NoOverlap, NoRetrospectiveOrigins
from .forecasters import fit_and_forecast
from .hub_io import (
    ThetaTraceRow,
    ingest_truth_csv,
    write_hub_forecasts,
    write_score_records,
    write_score_table,
    write_theta_trace,
)
from .plan import BacktestPlan, ForecasterPlan
from .scenarios import add_observation_noise, load_scenario
from .scoring import OVERALL, AggregationWindow, aggregate, score_forecast
from .series import Cadence, EpidemicSeries, ForecastSet

logger = logging.getLogger(__name__)


@dataclass
class CellOutcome:
    """Record of one processed (location, forecaster, origin) cell."""
    location: str
    forecaster: str
    origin: int
    phase: str
    timestamp: datetime
    error: Optional[str] = None


class BacktestHistory:
    """Thread-safe append-only log of processed cells."""

    def __init__(self):
        self._outcomes: list[CellOutcome] = []
        self._lock = threading.Lock()

    def add(self, outcome: CellOutcome) -> None:
        with self._lock:
            self._outcomes.append(outcome)

    def failures(self) -> list[CellOutcome]:
        with self._lock:
            failed = [o for o in self._outcomes if o.error]
        return sorted(failed, key=lambda o: (o.location, o.forecaster, o.origin, o.phase))

    def get_stats(self) -> dict:
        with self._lock:
            total = len(self._outcomes)
            errors = sum(1 for o in self._outcomes if o.error)
            return {
                "cells_processed": total,
                "forecast_cells": sum(1 for o in self._outcomes if o.phase == "forecast"),
                "theta_cells": sum(1 for o in self._outcomes if o.phase == "theta"),
                "errors": errors,
            }


@dataclass
class ForecasterRun:
    """Both arms of one forecaster across all locations."""
    name: str
    base_sets: list = field(default_factory=list)
    epimod_sets: list = field(default_factory=list)
    theta_rows: list = field(default_factory=list)
    base_records: list = field(default_factory=list)
    epimod_records: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    missing_truth: int = 0


@dataclass
class BacktestResult:
    plan: BacktestPlan
    runs: dict
    history: BacktestHistory


def load_truth(plan: BacktestPlan) -> dict[str, EpidemicSeries]:
    """Truth series per location from the plan's file or scenario."""
    if plan.scenario:
        scenario = load_scenario(plan.scenario)
        series = add_observation_noise(scenario.simulate(), scenario.noise, plan.seed)
        truth = {series.location: series}
    else:
        truth = ingest_truth_csv(plan.truth_path)

    if plan.locations:
        unknown = sorted(set(plan.locations) - set(truth))
        if unknown:
            logger.warning(f"Locations not in truth: {unknown}")
        truth = {loc: s for loc, s in truth.items() if loc in plan.locations}
    return truth


def summary_windows(plan: BacktestPlan, cadence: Cadence, k: int) -> list[AggregationWindow]:
    """overall, one-week and four-week horizons, then the plan's own windows."""
    week = 1 if cadence is Cadence.WEEKLY else 7
    windows = [OVERALL]
    for weeks in (1, 4):
        h = week * weeks
        if h <= k:
            windows.append(AggregationWindow(f"h{h}", horizons={h}))
    return windows + list(plan.windows)


class BacktestRunner:
    """Runs one plan; caches forecasts per (location, forecaster, origin)."""

    def __init__(self, plan: BacktestPlan, threads: int = 1):
        self.plan = plan
        self.threads = max(threads, 1)
        self.history = BacktestHistory()
        self._forecasts: dict[tuple, ForecastSet] = {}
        self._lock = threading.Lock()

    # --- phase 1 ---

    def _forecast_cell(self, series: EpidemicSeries, forecaster: ForecasterPlan, origin: int, k: int) -> None:
        try:
            fs = fit_and_forecast(forecaster.spec, series.head(origin), k)
            with self._lock:
                self._forecasts[(series.location, forecaster.name, origin)] = fs
            self.history.add(CellOutcome(series.location, forecaster.name, origin, "forecast", datetime.now()))
        except Exception as e:
            logger.error(f"Forecast failed for {series.location}/{forecaster.name} at origin {origin}: {e}",
                         exc_info=True)
            self.history.add(CellOutcome(series.location, forecaster.name, origin, "forecast",
                                         datetime.now(), error=str(e)))

    def cached(self, location: str, forecaster: str, origin: int) -> ForecastSet:
        with self._lock:
            fs = self._forecasts.get((location, forecaster, origin))
        if fs is None:
            raise EpimodError(f"No forecast for {location}/{forecaster} at origin {origin}")
        return fs

    def _schedule(self, series: EpidemicSeries) -> tuple:
        """(k, outer origins, anchor, cv stride) for a series."""
        cadence = series.cadence
        k = self.plan.horizons_for(cadence)
        stride = self.plan.stride_for(cadence)
        first = self.plan.first_origin_for(cadence)
        outer = list(range(first, len(series) + 1, stride))
        return k, outer, first, self.plan.cv_stride_for(cadence)

    def _needed_origins(self, series: EpidemicSeries, forecaster: ForecasterPlan) -> list[int]:
        k, outer, anchor, cv_stride = self._schedule(series)
        needed = set(outer)
        if forecaster.modulate:
            minimum = forecaster.spec.min_history
            needed.update(t for t in range(minimum, len(series) - k + 1) if (t - anchor) % cv_stride == 0)
        return sorted(t for t in needed if t >= forecaster.spec.min_history)

    # --- phase 2 ---

    def _theta_options(self, anchor: int, cv_stride: int) -> ThetaOptions:
        options = self.plan.theta
        return ThetaOptions(
            fixed_theta=options.fixed_theta,
            upper=options.upper,
            grid_points=options.grid_points,
            restarts=options.restarts,
            tolerance=options.tolerance,
            cv_stride=cv_stride,
            cv_anchor=anchor,
        )

    def _estimate(self, series: EpidemicSeries, forecaster: ForecasterPlan, origin: int) -> ThetaEstimate:
        history = series.head(origin)
        k, _, anchor, cv_stride = self._schedule(series)
        options = self._theta_options(anchor, cv_stride)
        scale = max(history.values) if max(history.values) > 0 else 1.0

        if not forecaster.modulate:
            return ThetaEstimate(Theta(0.0, scale), 0.0, 0.0, 0, (0.0, options.upper))

        try:
            return estimate_theta(
                history, forecaster.spec, k, self.plan.mode, options,
                forecast_at=lambda t: self.cached(series.location, forecaster.name, t),
            )
        except (InsufficientHistory, NoRetrospectiveOrigins):
            # nothing to learn from yet: leave the forecast alone unless theta is fixed
            value = options.fixed_theta or 0.0
            return ThetaEstimate(Theta(value, scale), 0.0, 0.0, 0, (0.0, options.upper),
                                 fixed=options.fixed_theta is not None)

    def _theta_cell(self, series: EpidemicSeries, forecaster: ForecasterPlan, origin: int) -> Optional[tuple]:
        try:
            base = self.cached(series.location, forecaster.name, origin)
        except EpimodError:
            return None

        try:
            estimate = self._estimate(series, forecaster, origin)
            burden = history_burden_at(series, origin) if self.plan.mode.include_history else 0.0
            modulated = modulate_set(base, estimate.theta, self.plan.mode, burden)
            self.history.add(CellOutcome(series.location, forecaster.name, origin, "theta", datetime.now()))
        except Exception as e:
            logger.error(f"Theta estimation failed for {series.location}/{forecaster.name} at origin {origin}: {e}",
                         exc_info=True)
            self.history.add(CellOutcome(series.location, forecaster.name, origin, "theta",
                                         datetime.now(), error=str(e)))
            return None

        row = ThetaTraceRow(
            forecast_date=base.forecast_date,
            location=series.location,
            theta=estimate.theta.raw,
            theta_scaled=estimate.theta.value,
            objective_zero=estimate.objective_at_zero,
            objective_opt=estimate.objective_at_optimum,
            origins_used=estimate.origins_used,
        )
        return base, modulated.with_model(f"{forecaster.name}-epimod"), row

    # --- driver ---

    def run(self, truth: dict[str, EpidemicSeries]) -> dict[str, ForecasterRun]:
        locations = sorted(truth)
        logger.info(f"Backtest '{self.plan.name}': {len(locations)} locations, "
                    f"{len(self.plan.forecasters)} forecasters, {self.threads} threads")

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            jobs = []
            for location in locations:
                series = truth[location]
                k = self.plan.horizons_for(series.cadence)
                for forecaster in self.plan.forecasters:
                    for origin in self._needed_origins(series, forecaster):
                        jobs.append(pool.submit(self._forecast_cell, series, forecaster, origin, k))
            for job in jobs:
                job.result()
            logger.info(f"Produced {len(self._forecasts)} of {len(jobs)} forecasts")

            theta_jobs = {}
            for location in locations:
                series = truth[location]
                _, outer, _, _ = self._schedule(series)
                for forecaster in self.plan.forecasters:
                    for origin in outer:
                        key = (forecaster.name, location, origin)
                        theta_jobs[key] = pool.submit(self._theta_cell, series, forecaster, origin)

            runs = {f.name: ForecasterRun(f.name) for f in self.plan.forecasters}
            for key in sorted(theta_jobs):
                outcome = theta_jobs[key].result()
                if outcome is None:
                    continue
                base, modulated, row = outcome
                run = runs[key[0]]
                run.base_sets.append(base)
                run.epimod_sets.append(modulated)
                run.theta_rows.append(row)

        for forecaster in self.plan.forecasters:
            self._score(runs[forecaster.name], truth)
        return runs

    def _score(self, run: ForecasterRun, truth: dict[str, EpidemicSeries]) -> None:
        for base, modulated in zip(run.base_sets, run.epimod_sets):
            series = truth[base.location]
            records, missing = score_forecast(series, base, self.plan.wis)
            run.base_records.extend(records)
            run.missing_truth += missing
            records, _ = score_forecast(series, modulated, self.plan.wis)
            run.epimod_records.extend(records)

        if run.missing_truth:
            logger.info(f"{run.name}: {run.missing_truth} forecast horizons have no truth yet")

        if not run.base_sets:
            logger.warning(f"{run.name}: no forecasts produced")
            return
        cadence = run.base_sets[0].cadence
        windows = summary_windows(self.plan, cadence, run.base_sets[0].horizon_count)
        try:
            result = aggregate(run.base_records, run.epimod_records, windows, model_name=f"{run.name}-epimod")
            run.summary = result.rows
        except NoOverlap as e:
            logger.warning(f"{run.name}: nothing to summarize ({e})")


def write_results(plan: BacktestPlan, runs: dict[str, ForecasterRun]) -> Path:
    """Write every artifact under <output_dir>/<forecaster>/."""
    root = Path(plan.output_dir)
    for name in sorted(runs):
        run = runs[name]
        directory = root / name
        write_hub_forecasts(run.base_sets, directory / "base" / "forecasts.csv")
        write_score_records(run.base_records, directory / "base" / "scores.csv")
        write_hub_forecasts(run.epimod_sets, directory / "epimod" / "forecasts.csv")
        write_score_records(run.epimod_records, directory / "epimod" / "scores.csv")
        write_theta_trace(run.theta_rows, directory / "epimod" / "theta.csv")
        write_score_table(run.summary, directory / "summary.csv")
    logger.info(f"Wrote backtest artifacts to {root}")
    return root


def run_backtest(plan: BacktestPlan, threads: Optional[int] = None, write: bool = True,
                 truth: Optional[dict] = None) -> BacktestResult:
    """Run a plan end to end; returns in-memory results and optionally writes artifacts."""
    threads = threads or plan.threads or 1
    truth = truth if truth is not None else load_truth(plan)
    runner = BacktestRunner(plan, threads)
    runs = runner.run(truth)

    stats = runner.history.get_stats()
    logger.info(f"Backtest finished: {stats}")
    for failure in runner.history.failures():
        logger.warning(f"Failed cell {failure.location}/{failure.forecaster} origin {failure.origin} "
                       f"({failure.phase}): {failure.error}")

    if write:
        write_results(plan, runs)
    return BacktestResult(plan=plan, runs=runs, history=runner.history)
