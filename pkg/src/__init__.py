"""
Epimod - susceptible-depletion post-processing of epidemic forecasts.

Base forecasters (ARIMA, Holt, smoothing spline, naive) are damped by an
epimodulation factor whose strength theta is cross-validated on each
location's own forecast history, then scored with MAE and WIS.
"""

__version__ = "1.0.0"

from .config import AppConfig, load_config
from .epimod import (
    ExponentMode,
    ModulationMode,
    Theta,
    ThetaEstimate,
    ThetaOptions,
    estimate_theta,
    fit_theta,
    modulate,
    modulate_quantiles,
    prediction_error,
)
from .errors import EpimodError
from .forecasters import ForecasterKind, ForecasterSpec, fit, forecast
from .scoring import WeightConvention, WisConfig, aggregate, interval_score, mae, percent_improvement, wis
from .series import Cadence, EpidemicSeries, ForecastSet, ScoreRecord
from .sir import SirParams, WaveSchedule, simulate_incidence

__all__ = [
    # Config
    "AppConfig",
    "load_config",
    # Domain
    "Cadence",
    "EpidemicSeries",
    "ForecastSet",
    "ScoreRecord",
    "EpimodError",
    # Simulation
    "SirParams",
    "WaveSchedule",
    "simulate_incidence",
    # Forecasting
    "ForecasterKind",
    "ForecasterSpec",
    "fit",
    "forecast",
    # Epimodulation
    "ExponentMode",
    "ModulationMode",
    "Theta",
    "ThetaEstimate",
    "ThetaOptions",
    "modulate",
    "modulate_quantiles",
    "prediction_error",
    "fit_theta",
    "estimate_theta",
    # Scoring
    "WeightConvention",
    "WisConfig",
    "mae",
    "interval_score",
    "wis",
    "percent_improvement",
    "aggregate",
]
