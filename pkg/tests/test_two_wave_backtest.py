"""
Backtest on the simulated two-wave epidemic.

The base models extrapolate trends, so they overshoot each turning peak;
epimodulation should learn to damp those overshoots without giving up
accuracy elsewhere.
"""
import pytest
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from datetime import timedelta

import numpy as np

from src.backtest import load_truth, run_backtest
from src.plan import parse_plan
from src.scoring import AggregationWindow, aggregate

CHANGE_DAY = 170


@pytest.fixture(scope="module")
def two_wave(tmp_path_factory):
    plan = parse_plan({
        "scenario": "two-wave",
        "horizons": "28",
        "origin_stride": "7",
        "theta.grid_points": "400",
        "forecaster.arima.kind": "arima",
        "forecaster.holt.kind": "holt",
        "forecaster.spline.kind": "spline",
        "forecaster.naive.kind": "naive",
        "output_dir": str(tmp_path_factory.mktemp("two-wave")),
    }, name="two-wave")
    truth = load_truth(plan)
    result = run_backtest(plan, threads=4, write=False, truth=truth)
    return truth["SIM"], result.runs


def _peaks(series):
    values = np.asarray(series.values)
    first = int(np.argmax(values[:CHANGE_DAY]))
    second = CHANGE_DAY + int(np.argmax(values[CHANGE_DAY:]))
    return first, second


def test_scenario_has_two_interior_peaks(two_wave):
    series, _ = two_wave
    first, second = _peaks(series)
    assert 40 < first < CHANGE_DAY - 28
    assert CHANGE_DAY < second < len(series) - 28


def test_theta_zero_during_early_growth(two_wave):
    series, runs = two_wave
    first, _ = _peaks(series)
    early = [row for fs, row in zip(runs["arima"].base_sets, runs["arima"].theta_rows)
             if fs.origin_index <= first - 28]
    assert early
    assert all(row.theta == 0.0 for row in early)


def test_theta_positive_after_first_peak(two_wave):
    series, runs = two_wave
    first, _ = _peaks(series)
    later = [row for fs, row in zip(runs["arima"].base_sets, runs["arima"].theta_rows)
             if first < fs.origin_index <= CHANGE_DAY]
    assert any(row.theta > 0.0 for row in later)
    assert all(row.theta >= 0.0 for row in later)


def test_better_before_second_peak(two_wave):
    series, runs = two_wave
    _, second = _peaks(series)
    peak_date = series.date_at(second)
    window = AggregationWindow("pre-peak", start=peak_date - timedelta(days=28),
                               end=peak_date - timedelta(days=1), date_field="origin")
    run = runs["arima"]
    row = aggregate(run.base_records, run.epimod_records, [window]).rows[0]
    assert row.n_records > 0
    assert row.model_mae < row.base_mae
    assert row.pct_improvement >= 10.0


def test_long_horizons_gain_more_than_short(two_wave):
    _, runs = two_wave
    rows = {row.window: row for row in runs["arima"].summary}
    assert rows["h28"].abs_reduction > rows["h7"].abs_reduction


@pytest.mark.parametrize("name", ["arima", "holt", "spline", "naive"])
def test_no_harm_overall(two_wave, name):
    _, runs = two_wave
    overall = runs[name].summary[0]
    assert overall.window == "overall"
    assert overall.model_mae <= 1.02 * overall.base_mae
