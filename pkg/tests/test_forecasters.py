"""Tests for base forecasters and Gaussian quantiles."""
import pytest
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from datetime import date

import numpy as np

from src.errors import InsufficientHistory, InvalidForecast, InvalidParameters
from src.forecasters import (
    HUB_QUANTILE_LEVELS,
    FittedModel,
    ForecasterKind,
    ForecasterSpec,
    fit,
    fit_and_forecast,
    forecast,
    gaussian_quantiles,
    point_path,
    wrap_external,
)
from src.series import Cadence, EpidemicSeries, ForecastSet
from src.spline import fit_smoothing_spline, forecast_spline


def _series(values, location="CA"):
    return EpidemicSeries(location, Cadence.DAILY, date(2022, 1, 1), tuple(values))


@pytest.fixture
def wave():
    t = np.arange(40)
    return _series(1000.0 * np.exp(-((t - 30) / 8.0) ** 2) + 5.0)


def test_hub_levels():
    assert len(HUB_QUANTILE_LEVELS) == 23
    assert HUB_QUANTILE_LEVELS[0] == 0.01
    assert 0.5 in HUB_QUANTILE_LEVELS
    assert HUB_QUANTILE_LEVELS[-1] == 0.99


def test_spec_defaults_and_validation():
    spec = ForecasterSpec(ForecasterKind.ARIMA)
    assert spec.name == "arima"
    assert spec.hyperparameters == {"max_p": 3, "max_d": 2, "max_q": 3}
    assert spec.min_history == 10

    with pytest.raises(InvalidParameters):
        ForecasterSpec(ForecasterKind.HOLT, {"gamma": 0.1})
    with pytest.raises(InvalidParameters):
        ForecasterSpec(ForecasterKind.HOLT, quantile_levels=(0.5, 0.25))
    with pytest.raises(InvalidParameters):
        ForecasterSpec(ForecasterKind.HOLT, quantile_levels=(0.0, 0.5))


@pytest.mark.parametrize("kind,needed", [
    (ForecasterKind.ARIMA, 10),
    (ForecasterKind.HOLT, 4),
    (ForecasterKind.SPLINE, 8),
    (ForecasterKind.NAIVE, 2),
])
def test_insufficient_history(kind, needed):
    with pytest.raises(InsufficientHistory) as e:
        fit(ForecasterSpec(kind), _series([1.0] * (needed - 1)))
    assert e.value.needed == needed


def test_external_is_not_fittable():
    with pytest.raises(InvalidParameters):
        fit(ForecasterSpec(ForecasterKind.EXTERNAL), _series([1.0] * 5))


def test_constant_history_holt():
    """Holt on a constant series has zero trend and forecasts the constant."""
    model = fit(ForecasterSpec(ForecasterKind.HOLT, quantile_levels=(0.25, 0.5, 0.75)), _series([5.0] * 12))
    assert model.coefficients["trend"] == 0.0
    assert model.sigma == 0.0
    fs = forecast(model, 4)
    assert fs.point == (5.0, 5.0, 5.0, 5.0)
    for level in fs.levels:
        assert fs.quantiles[level] == fs.point


def test_holt_forecast_clipped_at_zero():
    spec = ForecasterSpec(ForecasterKind.HOLT)
    model = FittedModel(
        spec=spec,
        coefficients={"level": 100.0, "trend": -30.0, "alpha": 0.5, "beta": 0.1, "phi": 1.0},
        sigma=0.0,
        training_length=10,
        location="CA",
        cadence=Cadence.DAILY,
        origin_date=date(2022, 1, 10),
    )
    assert forecast(model, 5).point == (70.0, 40.0, 10.0, 0.0, 0.0)


def test_holt_translation_equivariance():
    history = [3, 5, 4, 8, 10, 9, 14, 15, 19, 18, 24, 26]
    spec = ForecasterSpec(ForecasterKind.HOLT)
    base = point_path(fit(spec, _series(history)), 6)
    shifted = point_path(fit(spec, _series([v + 64 for v in history])), 6)
    np.testing.assert_allclose(shifted - base, 64.0, atol=1e-9, rtol=0)


def test_damped_holt_flattens():
    history = [float(v) for v in range(1, 21)]
    plain = point_path(fit(ForecasterSpec(ForecasterKind.HOLT), _series(history)), 10)
    damped = point_path(fit(ForecasterSpec(ForecasterKind.HOLT, {"damped": True, "phi": 0.8}),
                            _series(history)), 10)
    assert damped[-1] < plain[-1]


def test_spline_continues_a_line():
    history = [2.0 * t + 3.0 for t in range(30)]
    fs = fit_and_forecast(ForecasterSpec(ForecasterKind.SPLINE), _series(history), 5)
    expected = np.array([2.0 * t + 3.0 for t in range(30, 35)])
    np.testing.assert_allclose(fs.point, expected, rtol=1e-6)


def test_spline_extrapolates_linearly(wave):
    spline = fit_smoothing_spline(wave.as_array())
    path = forecast_spline(spline, 4)
    np.testing.assert_allclose(np.diff(path), spline.boundary_slope)
    assert spline.sigma > 0


def test_spline_max_history_window(wave):
    spec = ForecasterSpec(ForecasterKind.SPLINE, {"max_history": 20})
    model = fit(spec, wave)
    assert model.training_length == len(wave)
    assert len(model.state.fitted) == 20


def test_naive_repeats_last_value():
    model = fit(ForecasterSpec(ForecasterKind.NAIVE), _series([1.0, 3.0, 2.0, 6.0]))
    assert forecast(model, 3).point == (6.0, 6.0, 6.0)
    assert model.sigma == pytest.approx(np.std([2.0, -1.0, 4.0]))


def test_gaussian_quantiles_widen_with_horizon():
    quantiles = gaussian_quantiles(np.array([100.0, 100.0]), 10.0, (0.1, 0.9))
    lower, upper = quantiles[0.1], quantiles[0.9]
    assert upper[1] - lower[1] == pytest.approx((upper[0] - lower[0]) * np.sqrt(2.0))


def test_gaussian_quantiles_clipped():
    quantiles = gaussian_quantiles(np.array([1.0]), 100.0, (0.01,))
    assert quantiles[0.01] == (0.0,)


@pytest.mark.parametrize("kind", [ForecasterKind.ARIMA, ForecasterKind.HOLT,
                                  ForecasterKind.SPLINE, ForecasterKind.NAIVE])
def test_forecast_sets_are_valid_and_deterministic(kind, wave):
    spec = ForecasterSpec(kind, quantile_levels=HUB_QUANTILE_LEVELS)
    first = fit_and_forecast(spec, wave, 7)
    second = fit_and_forecast(spec, wave, 7)
    assert first == second
    assert first.origin_index == len(wave)
    assert first.origin_date == wave.end_date
    assert first.model == kind.value
    assert all(v >= 0 for v in first.point)
    for h in range(1, 8):
        column = [first.quantiles_at(h)[q] for q in HUB_QUANTILE_LEVELS]
        assert column == sorted(column)
        assert column[0] >= 0


def test_wrap_external_truncates():
    fs = ForecastSet("CA", date(2022, 1, 10), (5.0, 6.0, 7.0), origin_index=10, model="ensemble")
    model = wrap_external(fs)
    assert model.spec.name == "ensemble"
    assert forecast(model, 2).point == (5.0, 6.0)
    with pytest.raises(InvalidForecast):
        forecast(model, 4)


def test_forecast_rejects_zero_horizon(wave):
    model = fit(ForecasterSpec(ForecasterKind.NAIVE), wave)
    with pytest.raises(InvalidParameters):
        forecast(model, 0)
