"""
Base forecasters: automatic ARIMA, Holt linear trend, smoothing spline and
naive persistence, plus externally produced forecasts wrapped as models.

None of these models know anything about epidemic peaks. Quantiles are
Gaussian around the point forecast with standard deviation sigma * sqrt(h).
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import norm

from .arima import fit_arima, forecast_arima
from .errors import InsufficientHistory, InvalidForecast, InvalidParameters
from .series import Cadence, EpidemicSeries, ForecastSet, validate_series
from .spline import fit_smoothing_spline, forecast_spline, lambda_grid

logger = logging.getLogger(__name__)


class ForecasterKind(Enum):
    ARIMA = "arima"
    HOLT = "holt"
    SPLINE = "spline"
    NAIVE = "naive"
    EXTERNAL = "external"


MIN_HISTORY = {
    ForecasterKind.ARIMA: 10,
    ForecasterKind.HOLT: 4,
    ForecasterKind.SPLINE: 8,
    ForecasterKind.NAIVE: 2,
    ForecasterKind.EXTERNAL: 0,
}

# Levels used by the forecast hubs: median plus 11 central intervals
HUB_QUANTILE_LEVELS = (0.01, 0.025) + tuple(round(0.05 * i, 2) for i in range(1, 20)) + (0.975, 0.99)

_HYPERPARAMETERS = {
    ForecasterKind.ARIMA: {"max_p": 3, "max_d": 2, "max_q": 3},
    ForecasterKind.HOLT: {"damped": False, "phi": 0.98},
    ForecasterKind.SPLINE: {"n_lambdas": 20, "lambda_min": 1e-2, "lambda_max": 1e8, "max_history": None},
    ForecasterKind.NAIVE: {},
    ForecasterKind.EXTERNAL: {},
}


@dataclass(frozen=True)
class ForecasterSpec:
    """Which model to fit, its hyperparameters and the quantile levels to emit."""
    kind: ForecasterKind
    hyperparameters: Mapping = field(default_factory=dict)
    quantile_levels: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        kind = ForecasterKind(self.kind)
        object.__setattr__(self, "kind", kind)

        unknown = set(self.hyperparameters) - set(_HYPERPARAMETERS[kind])
        if unknown:
            raise InvalidParameters(f"Unknown {kind.value} hyperparameters: {sorted(unknown)}")
        merged = dict(_HYPERPARAMETERS[kind])
        merged.update(self.hyperparameters)
        object.__setattr__(self, "hyperparameters", merged)

        if self.quantile_levels is not None:
            levels = tuple(float(q) for q in self.quantile_levels)
            if any(not 0.0 < q < 1.0 for q in levels):
                raise InvalidParameters(f"Quantile levels must lie in (0, 1): {levels}")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise InvalidParameters("Quantile levels must be strictly increasing")
            object.__setattr__(self, "quantile_levels", levels)

        if not self.name:
            object.__setattr__(self, "name", kind.value)

    @property
    def min_history(self) -> int:
        return MIN_HISTORY[self.kind]

    def __hash__(self):
        return hash((self.kind, self.name, tuple(sorted(self.hyperparameters.items())), self.quantile_levels))


@dataclass(frozen=True)
class FittedModel:
    """A model fitted to history[:training_length], ready to forecast from its end."""
    spec: ForecasterSpec
    coefficients: Mapping
    sigma: float
    training_length: int
    location: str
    cadence: Cadence
    origin_date: date
    state: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidParameters(f"sigma must be finite and >= 0, got {self.sigma}")


# --- Holt ---

def _holt_pass(z: np.ndarray, alpha: float, beta: float, phi: float) -> tuple:
    """Run the smoothing recursions; returns (sse, level, trend, residuals)."""
    level = z[0]
    trend = z[1] - z[0]
    residuals = np.empty(len(z) - 1)
    for t in range(1, len(z)):
        predicted = level + phi * trend
        error = z[t] - predicted
        residuals[t - 1] = error
        new_level = predicted + alpha * error
        trend = beta * (new_level - level) + (1.0 - beta) * phi * trend
        level = new_level
    return float(np.dot(residuals, residuals)), level, trend, residuals


def _fit_holt(y: np.ndarray, hyper: Mapping) -> tuple:
    phi = float(hyper["phi"]) if hyper["damped"] else 1.0
    if not 0.0 < phi <= 1.0:
        raise InvalidParameters(f"Damping phi must lie in (0, 1], got {phi}")

    spread = float(np.ptp(y))
    if spread == 0.0:
        return {"level": float(y[-1]), "trend": 0.0, "alpha": 1.0, "beta": 0.0, "phi": phi}, 0.0

    # work on a location/scale-free copy so the fit is translation equivariant
    loc = float(y[0])
    z = (y - loc) / spread

    def objective(u: np.ndarray) -> float:
        alpha, beta = expit(u)
        return _holt_pass(z, alpha, beta, phi)[0]

    best = None
    for start in ((0.5, 0.1), (0.9, 0.3), (0.2, 0.05)):
        result = minimize(objective, logit(np.array(start)), method="Nelder-Mead",
                          options={"xatol": 1e-8, "fatol": 1e-14, "maxiter": 400})
        if best is None or result.fun < best.fun:
            best = result

    alpha, beta = (float(v) for v in expit(best.x))
    _, level, trend, residuals = _holt_pass(z, alpha, beta, phi)
    sigma = float(np.std(residuals)) * spread
    coefficients = {
        "level": loc + spread * level,
        "trend": spread * trend,
        "alpha": alpha,
        "beta": beta,
        "phi": phi,
    }
    return coefficients, sigma


def _predict_holt(coefficients: Mapping, k: int) -> np.ndarray:
    phi = coefficients["phi"]
    if phi == 1.0:
        multipliers = np.arange(1, k + 1, dtype=float)
    else:
        multipliers = np.cumsum(phi ** np.arange(1, k + 1, dtype=float))
    return coefficients["level"] + multipliers * coefficients["trend"]


# --- Naive ---

def _fit_naive(y: np.ndarray) -> tuple:
    return {"level": float(y[-1])}, float(np.std(np.diff(y)))


# --- Dispatch ---

def fit(spec: ForecasterSpec, history: EpidemicSeries) -> FittedModel:
    """Fit the spec's model to the whole history (the forecast origin is its end)."""
    if spec.kind is ForecasterKind.EXTERNAL:
        raise InvalidParameters("External forecasts are not fittable; use wrap_external")

    validate_series(history)
    n = len(history)
    if n < spec.min_history:
        raise InsufficientHistory(spec.min_history, n, f"history for {spec.kind.value}")

    y = history.as_array()
    hyper = spec.hyperparameters
    state = None

    if spec.kind is ForecasterKind.ARIMA:
        state = fit_arima(y, max_p=int(hyper["max_p"]), max_d=int(hyper["max_d"]), max_q=int(hyper["max_q"]))
        p, d, q = state.order
        coefficients = {"p": p, "d": d, "q": q, "ar": state.ar, "ma": state.ma, "mean": state.mean}
        sigma = state.sigma
    elif spec.kind is ForecasterKind.HOLT:
        coefficients, sigma = _fit_holt(y, hyper)
    elif spec.kind is ForecasterKind.SPLINE:
        window = hyper["max_history"]
        if window is not None and n > int(window):
            y = y[-int(window):]
        lambdas = lambda_grid(int(hyper["n_lambdas"]), float(hyper["lambda_min"]), float(hyper["lambda_max"]))
        state = fit_smoothing_spline(y, lambdas)
        coefficients = {"lambda": state.lam, "level": state.boundary_value, "slope": state.boundary_slope}
        sigma = state.sigma
    else:
        coefficients, sigma = _fit_naive(y)

    return FittedModel(
        spec=spec,
        coefficients=coefficients,
        sigma=sigma,
        training_length=n,
        location=history.location,
        cadence=history.cadence,
        origin_date=history.end_date,
        state=state,
    )


def wrap_external(fs: ForecastSet, spec: Optional[ForecasterSpec] = None) -> FittedModel:
    """Treat a forecast produced elsewhere as a fitted model."""
    spec = spec or ForecasterSpec(ForecasterKind.EXTERNAL, name=fs.model or "external")
    return FittedModel(
        spec=spec,
        coefficients={},
        sigma=0.0,
        training_length=fs.origin_index or 0,
        location=fs.location,
        cadence=fs.cadence,
        origin_date=fs.origin_date,
        state=fs,
    )


def point_path(model: FittedModel, k: int) -> np.ndarray:
    """Unclipped point trajectory for horizons 1..k."""
    kind = model.spec.kind
    if kind is ForecasterKind.ARIMA:
        return forecast_arima(model.state, k)
    if kind is ForecasterKind.HOLT:
        return _predict_holt(model.coefficients, k)
    if kind is ForecasterKind.SPLINE:
        return forecast_spline(model.state, k)
    if kind is ForecasterKind.NAIVE:
        return np.full(k, model.coefficients["level"])
    raise InvalidParameters(f"No point path for {kind.value}")


def gaussian_quantiles(point: np.ndarray, sigma: float, levels) -> dict:
    """Quantile trajectories max(0, point_h + z_q * sigma * sqrt(h))."""
    spread = sigma * np.sqrt(np.arange(1, len(point) + 1, dtype=float))
    return {
        float(level): tuple(np.maximum(point + norm.ppf(level) * spread, 0.0).tolist())
        for level in levels
    }


def forecast(model: FittedModel, k: int) -> ForecastSet:
    """k-step forecast set from a fitted model."""
    if k < 1:
        raise InvalidParameters(f"k must be >= 1, got {k}")

    if model.spec.kind is ForecasterKind.EXTERNAL:
        fs = model.state
        if k > fs.horizon_count:
            raise InvalidForecast(f"External forecast has {fs.horizon_count} horizons, {k} requested")
        return fs.truncated(k)

    point = np.maximum(point_path(model, k), 0.0)
    quantiles = None
    if model.spec.quantile_levels:
        quantiles = gaussian_quantiles(point, model.sigma, model.spec.quantile_levels)

    return ForecastSet(
        location=model.location,
        origin_date=model.origin_date,
        point=tuple(point.tolist()),
        quantiles=quantiles,
        origin_index=model.training_length,
        cadence=model.cadence,
        model=model.spec.name,
    )


def fit_and_forecast(spec: ForecasterSpec, history: EpidemicSeries, k: int) -> ForecastSet:
    return forecast(fit(spec, history), k)
