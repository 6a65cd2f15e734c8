"""Tests for epimodulation and cross-validated theta."""
import pytest
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import math
from datetime import date, timedelta

import numpy as np

from src.epimod import (
    ExponentMode,
    ModulationMode,
    Theta,
    ThetaOptions,
    admissible_origins,
    estimate_theta,
    fit_theta,
    golden_section_search,
    history_burden_at,
    modulate,
    modulate_quantiles,
    modulate_set,
    prediction_error,
)
from src.errors import (
    InsufficientHistory,
    InvalidForecast,
    InvalidParameters,
    NegativeForecastInput,
    NoQuantiles,
    NoRetrospectiveOrigins,
    OriginBeyondTruth,
)
from src.forecasters import HUB_QUANTILE_LEVELS, ForecasterKind, ForecasterSpec
from src.scenarios import load_scenario
from src.series import Cadence, EpidemicSeries, ForecastSet

START = date(2022, 1, 1)
CUMULATIVE = ModulationMode(ExponentMode.CUMULATIVE_WINDOW)
TOTAL = ModulationMode(ExponentMode.TOTAL_WINDOW)


def _series(values, location="CA"):
    return EpidemicSeries(location, Cadence.DAILY, START, tuple(float(v) for v in values))


def _forecast_at(truth: EpidemicSeries, origin: int, point, quantiles=None) -> ForecastSet:
    return ForecastSet(truth.location, truth.date_at(origin - 1), tuple(point),
                       quantiles=quantiles, origin_index=origin)


def _random_forecast_set(rng) -> ForecastSet:
    k = int(rng.integers(1, 11))
    n_levels = int(rng.integers(1, len(HUB_QUANTILE_LEVELS) + 1))
    levels = sorted(rng.choice(HUB_QUANTILE_LEVELS, size=n_levels, replace=False).tolist())
    matrix = np.sort(rng.uniform(0, 5000, size=(n_levels, k)), axis=0)
    quantiles = {level: tuple(matrix[i]) for i, level in enumerate(levels)}
    return ForecastSet("CA", START, tuple(rng.uniform(0, 5000, size=k)), quantiles=quantiles)


def _oracle(point, raw, total=False):
    """Direct evaluation of y_j * exp(-raw * burden_j) without numpy."""
    out = []
    running = 0.0
    whole = math.fsum(point)
    for value in point:
        running += value
        out.append(value * math.exp(-raw * (whole if total else running)))
    return out


# --- modulate ---

def test_hand_evaluated_cumulative_window():
    out = modulate([100.0, 100.0, 100.0], Theta.from_raw(0.001), CUMULATIVE)
    np.testing.assert_allclose(out, [90.4837, 81.8731, 74.0818], atol=1e-4)
    assert out[0] == pytest.approx(100 * math.exp(-0.1), rel=1e-15)


def test_hand_evaluated_total_window():
    out = modulate([100.0, 100.0, 100.0], Theta.from_raw(0.001), TOTAL)
    np.testing.assert_allclose(out, [100 * math.exp(-0.3)] * 3, rtol=1e-15)


def test_larger_forecasts_shrink_more():
    theta = Theta.from_raw(0.001)
    small = modulate([10.0, 10.0], theta) / 10.0
    large = modulate([100.0, 100.0], theta) / 100.0
    assert np.all(large < small)


def test_history_burden_added_to_exponent():
    mode = ModulationMode(ExponentMode.CUMULATIVE_WINDOW, include_history=True)
    out = modulate([100.0], Theta.from_raw(0.001), mode, history_burden=200.0)
    assert out[0] == pytest.approx(100 * math.exp(-0.3), rel=1e-14)
    assert history_burden_at(_series([1, 2, 3, 4]), 3) == 6.0


def test_negative_input_rejected():
    with pytest.raises(NegativeForecastInput) as e:
        modulate([1.0, -1.0], Theta.from_raw(0.1))
    assert e.value.index == 1


def test_theta_validation():
    with pytest.raises(InvalidParameters):
        Theta(-1.0)
    with pytest.raises(InvalidParameters):
        Theta(1.0, scale=0.0)
    assert Theta(2.0, scale=4.0).raw == 0.5


def test_identity_at_zero_on_random_sets():
    rng = np.random.default_rng(1)
    zero = Theta(0.0, scale=123.0)
    for _ in range(1000):
        fs = _random_forecast_set(rng)
        for mode in (CUMULATIVE, TOTAL):
            assert modulate_quantiles(fs, zero, mode) == fs
            assert tuple(modulate(fs.point, zero, mode).tolist()) == fs.point


def test_modulation_matches_direct_evaluation():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        k = int(rng.integers(1, 29))
        point = rng.uniform(0, 1000, size=k).tolist()
        raw = float(rng.uniform(0, 1e-3))
        theta = Theta.from_raw(raw)
        for mode, total in ((CUMULATIVE, False), (TOTAL, True)):
            out = modulate(point, theta, mode)
            expected = _oracle(point, raw, total)
            np.testing.assert_allclose(out, expected, rtol=1e-12, atol=0)
            assert np.all(out <= np.asarray(point))


def test_quantiles_stay_monotone_on_random_sets():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        fs = _random_forecast_set(rng)
        theta = Theta.from_raw(float(rng.uniform(0, 5e-3)))
        out = modulate_quantiles(fs, theta, CUMULATIVE)
        for h in range(1, out.horizon_count + 1):
            column = [out.quantiles_at(h)[level] for level in out.levels]
            assert column == sorted(column)


def test_crossing_quantiles_are_resorted():
    fs = ForecastSet("CA", START, (500.0, 500.0), quantiles={0.25: (100.0, 100.0), 0.75: (2000.0, 2000.0)})
    theta = Theta.from_raw(0.01)
    raw_low = modulate(fs.quantiles[0.25], theta)
    raw_high = modulate(fs.quantiles[0.75], theta)
    assert np.all(raw_high < raw_low)

    out = modulate_quantiles(fs, theta)
    for h in range(2):
        assert out.quantiles[0.75][h] >= out.quantiles[0.25][h]
    assert out.quantiles[0.25] == tuple(raw_high.tolist())
    assert out.point == tuple(modulate(fs.point, theta).tolist())


def test_single_level_equals_modulate():
    fs = ForecastSet("CA", START, (50.0, 60.0), quantiles={0.5: (40.0, 70.0)})
    theta = Theta.from_raw(0.002)
    out = modulate_quantiles(fs, theta)
    assert out.quantiles[0.5] == tuple(modulate([40.0, 70.0], theta).tolist())


def test_no_quantiles():
    fs = ForecastSet("CA", START, (50.0, 60.0))
    with pytest.raises(NoQuantiles):
        modulate_quantiles(fs, Theta.from_raw(0.01))
    assert modulate_set(fs, Theta.from_raw(0.01)).point == tuple(modulate([50.0, 60.0], Theta.from_raw(0.01)))


# --- prediction error ---

def test_prediction_error_of_perfect_forecasts():
    truth = _series([1, 2, 3, 4, 5, 6])
    forecasts = [_forecast_at(truth, origin, truth.values[origin:origin + 2]) for origin in (1, 2, 3, 4)]
    assert prediction_error(truth, forecasts, Theta()) == 0.0


def test_prediction_error_at_zero_equals_plain_sse():
    rng = np.random.default_rng(4)
    truth = _series(rng.uniform(0, 100, size=30))
    forecasts = [_forecast_at(truth, origin, rng.uniform(0, 100, size=5)) for origin in range(3, 26)]
    expected = math.fsum(
        (fs.point[h] - truth.values[fs.origin_index + h]) ** 2
        for fs in forecasts for h in range(5)
    )
    assert prediction_error(truth, forecasts, Theta()) == expected


def test_prediction_error_solved_exponent():
    truth = _series([5.0, 8.0])
    forecasts = [_forecast_at(truth, 1, [10.0])]
    theta = Theta.from_raw(math.log(10.0 / 8.0) / 10.0)
    assert prediction_error(truth, forecasts, theta) == pytest.approx(0.0, abs=1e-20)


def test_prediction_error_window_beyond_truth():
    truth = _series([5.0, 8.0])
    with pytest.raises(OriginBeyondTruth):
        prediction_error(truth, [_forecast_at(truth, 1, [10.0, 10.0])], Theta())


# --- theta fitting ---

def test_golden_section_finds_parabola_minimum():
    x, fx = golden_section_search(lambda v: (v - 2.0) ** 2, 0.0, 5.0, 1e-10)
    assert x == pytest.approx(2.0, abs=1e-8)
    assert fx == pytest.approx(0.0, abs=1e-15)


def test_admissible_origins():
    assert admissible_origins(20, 5, 4) == list(range(4, 16))
    assert admissible_origins(20, 5, 4, stride=3, anchor=6) == [6, 9, 12, 15]
    assert admissible_origins(8, 5, 4) == []


def test_fit_theta_requires_forecasts():
    with pytest.raises(NoRetrospectiveOrigins):
        fit_theta(_series([1, 2, 3]), [])


def test_fixed_theta_passthrough():
    truth = _series([10, 20, 30, 20, 10])
    forecasts = [_forecast_at(truth, 2, [40.0, 50.0])]
    estimate = fit_theta(truth, forecasts, options=ThetaOptions(fixed_theta=0.5))
    assert estimate.fixed
    assert estimate.theta == Theta(0.5, 30.0)
    assert estimate.objective_at_zero == prediction_error(truth, forecasts, Theta())
    assert estimate.objective_at_optimum == prediction_error(truth, forecasts, estimate.theta)


def test_all_zero_truth_gives_zero_theta():
    truth = _series([0, 0, 0, 0])
    estimate = fit_theta(truth, [_forecast_at(truth, 1, [3.0, 4.0])])
    assert estimate.theta.value == 0.0


def _dense_minimum(truth, forecasts, mode, scale, upper=10.0, points=10_000):
    values, observed, burden = [], [], []
    for fs in forecasts:
        p = np.asarray(fs.point)
        values.append(p)
        observed.append(np.asarray(truth.values[fs.origin_index:fs.origin_index + len(p)]))
        burden.append(np.cumsum(p) if mode.exponent is ExponentMode.CUMULATIVE_WINDOW else np.full(len(p), p.sum()))
    values, observed, burden = (np.concatenate(a) for a in (values, observed, burden))
    grid = np.linspace(0.0, upper, points + 1) / scale
    residuals = values[None, :] * np.exp(-grid[:, None] * burden[None, :]) - observed[None, :]
    return float(np.min(np.sum(residuals ** 2, axis=1)))


@pytest.mark.parametrize("mode", [CUMULATIVE, TOTAL])
def test_optimizer_matches_dense_grid(mode):
    rng = np.random.default_rng(5)
    t = np.arange(60)
    for _ in range(25):
        peak = rng.uniform(20, 40)
        width = rng.uniform(5, 15)
        height = rng.uniform(50, 5000)
        truth = _series(height * np.exp(-((t - peak) / width) ** 2) + 1.0)
        forecasts = []
        for origin in range(5, 54, 4):
            last = truth.values[origin - 1]
            slope = last - truth.values[origin - 2]
            bias = rng.uniform(0.8, 1.5)
            path = [max(0.0, bias * (last + slope * h)) for h in range(1, 8)]
            forecasts.append(_forecast_at(truth, origin, path))

        estimate = fit_theta(truth, forecasts, mode)
        dense = _dense_minimum(truth, forecasts, mode, max(truth.values))
        assert estimate.objective_at_optimum <= dense * (1 + 1e-6)
        assert estimate.objective_at_optimum <= estimate.objective_at_zero


def test_exponential_growth_gives_zero_theta():
    """A linear-trend base underpredicts convex growth, so any shrinkage hurts."""
    truth = _series(10.0 * 1.1 ** np.arange(40))
    estimate = estimate_theta(truth, ForecasterSpec(ForecasterKind.HOLT), 7)
    assert estimate.theta.value == 0.0
    assert estimate.objective_at_optimum == estimate.objective_at_zero


def test_single_wave_spline_gives_positive_theta():
    truth = load_scenario("single-wave").simulate().head(100)
    options = ThetaOptions(cv_stride=7)
    estimate = estimate_theta(truth, ForecasterSpec(ForecasterKind.SPLINE), 7, options=options)
    assert estimate.theta.value > 0.0
    assert estimate.objective_at_optimum < estimate.objective_at_zero


def test_theta_is_scale_invariant():
    t = np.arange(60)
    base = _series(1000.0 * np.exp(-((t - 30) / 10.0) ** 2) + 1.0)
    scaled = base.scaled(4.0)
    spec = ForecasterSpec(ForecasterKind.HOLT)
    options = ThetaOptions(cv_stride=3)
    a = estimate_theta(base, spec, 7, options=options)
    b = estimate_theta(scaled, spec, 7, options=options)
    assert a.theta.value > 0.0
    assert b.theta.value == pytest.approx(a.theta.value, rel=1e-6)
    assert b.theta.raw == pytest.approx(a.theta.raw / 4.0, rel=1e-6)


def test_estimate_theta_needs_an_origin():
    with pytest.raises(InsufficientHistory):
        estimate_theta(_series(range(1, 11)), ForecasterSpec(ForecasterKind.HOLT), 7)


def test_estimate_theta_skips_failing_origins():
    truth = _series([10, 20, 40, 60, 70, 60, 40, 20, 10, 5])

    def flaky(origin):
        if origin % 2:
            raise InvalidForecast("bad origin")
        return _forecast_at(truth, origin, [truth.values[origin - 1]] * 2)

    estimate = estimate_theta(truth, ForecasterSpec(ForecasterKind.NAIVE), 2, forecast_at=flaky)
    assert estimate.origins_used == len([o for o in admissible_origins(10, 2, 2) if o % 2 == 0])

    def broken(origin):
        raise InvalidForecast("bad origin")

    with pytest.raises(NoRetrospectiveOrigins):
        estimate_theta(truth, ForecasterSpec(ForecasterKind.NAIVE), 2, forecast_at=broken)
