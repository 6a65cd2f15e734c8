"""
Epimodulation: shrink a forecast by exp(-theta * cumulative forecast burden)
to encode susceptible depletion, with theta chosen by rolling-origin
cross-validation on the location's own history.

theta is stored normalized: Theta.value is dimensionless and the exponent uses
value / scale, where scale is the largest count observed when theta was fitted.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    EpimodError,
    InsufficientHistory,
    InvalidParameters,
    NegativeForecastInput,
    NoQuantiles,
    NoRetrospectiveOrigins,
    OriginBeyondTruth,
)
from .forecasters import ForecasterSpec, fit_and_forecast
from .series import EpidemicSeries, ForecastSet, resolve_origin

logger = logging.getLogger(__name__)

INVPHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INVPHI2 = (3 - math.sqrt(5)) / 2  # 1 / phi^2

# an optimum must beat theta = 0 by this relative margin to be used
IMPROVEMENT_MARGIN = 1e-10


class ExponentMode(Enum):
    """Which forecast burden enters the exponent at horizon j."""
    CUMULATIVE_WINDOW = "cumulative_window"  # sum of horizons 1..j
    TOTAL_WINDOW = "total_window"            # sum of horizons 1..k for every j


@dataclass(frozen=True)
class ModulationMode:
    exponent: ExponentMode = ExponentMode.CUMULATIVE_WINDOW
    include_history: bool = False

    def __post_init__(self):
        object.__setattr__(self, "exponent", ExponentMode(self.exponent))


@dataclass(frozen=True)
class Theta:
    """Depletion strength; modulation uses the raw rate value / scale."""
    value: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise InvalidParameters(f"theta must be finite and >= 0, got {self.value}")
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise InvalidParameters(f"theta scale must be finite and > 0, got {self.scale}")

    @property
    def raw(self) -> float:
        return self.value / self.scale

    @classmethod
    def from_raw(cls, raw: float, scale: float = 1.0) -> "Theta":
        return cls(value=raw * scale, scale=scale)


ZERO_THETA = Theta()


@dataclass(frozen=True)
class ThetaEstimate:
    theta: Theta
    objective_at_optimum: float
    objective_at_zero: float
    origins_used: int
    bracket: tuple
    fixed: bool = False


@dataclass(frozen=True)
class ThetaOptions:
    """How theta is chosen.

    fixed_theta is a normalized value used as-is (no cross-validation).
    The search covers normalized values [0, upper] with a coarse grid of
    grid_points intervals, then golden-section refines the best `restarts`
    grid minima. cv_stride/cv_anchor thin the cross-validation origins to
    those congruent to the anchor.
    """
    fixed_theta: Optional[float] = None
    upper: float = 10.0
    grid_points: int = 1000
    restarts: int = 3
    tolerance: float = 1e-9
    cv_stride: int = 1
    cv_anchor: Optional[int] = None

    def __post_init__(self):
        if self.fixed_theta is not None and (not math.isfinite(self.fixed_theta) or self.fixed_theta < 0):
            raise InvalidParameters(f"fixed theta must be finite and >= 0, got {self.fixed_theta}")
        if self.upper <= 0:
            raise InvalidParameters(f"theta search bound must be > 0, got {self.upper}")
        if self.grid_points < 2:
            raise InvalidParameters(f"grid_points must be >= 2, got {self.grid_points}")
        if self.cv_stride < 1:
            raise InvalidParameters(f"cv_stride must be >= 1, got {self.cv_stride}")


def _burden(values: np.ndarray, mode: ModulationMode, history_burden: float) -> np.ndarray:
    if mode.exponent is ExponentMode.CUMULATIVE_WINDOW:
        burden = np.cumsum(values)
    else:
        burden = np.full(len(values), float(np.sum(values)))
    if mode.include_history:
        burden = burden + history_burden
    return burden


def _check_nonnegative(values: np.ndarray) -> None:
    negative = np.flatnonzero(values < 0)
    if len(negative):
        index = int(negative[0])
        raise NegativeForecastInput(index, float(values[index]))


def modulate(point, theta: Theta, mode: ModulationMode = ModulationMode(),
             history_burden: float = 0.0) -> np.ndarray:
    """
    Modulated trajectory y_j * exp(-theta' * B_j), where B_j is the forecast
    burden for horizon j under `mode` (plus history_burden when the mode
    includes observed history).
    """
    values = np.asarray(point, dtype=float)
    _check_nonnegative(values)
    if theta.value == 0.0:
        return values.copy()
    return values * np.exp(-theta.raw * _burden(values, mode, history_burden))


def modulate_quantiles(fs: ForecastSet, theta: Theta, mode: ModulationMode = ModulationMode(),
                       history_burden: float = 0.0) -> ForecastSet:
    """Modulate every quantile trajectory and the point, then re-sort quantiles per horizon."""
    if not fs.quantiles:
        raise NoQuantiles(f"Forecast set for {fs.location} {fs.origin_date} has no quantiles")
    if theta.value == 0.0:
        return fs

    levels = fs.levels
    matrix = np.vstack([modulate(fs.quantiles[level], theta, mode, history_burden) for level in levels])
    ordered = np.sort(matrix, axis=0)
    repaired = int(np.count_nonzero(np.any(ordered != matrix, axis=0)))
    if repaired:
        logger.debug(f"Re-sorted modulated quantiles at {repaired} horizons for {fs.location} {fs.origin_date}")

    point = modulate(fs.point, theta, mode, history_burden)
    quantiles = {level: tuple(ordered[i].tolist()) for i, level in enumerate(levels)}
    return fs.with_values(point.tolist(), quantiles)


def modulate_set(fs: ForecastSet, theta: Theta, mode: ModulationMode = ModulationMode(),
                 history_burden: float = 0.0) -> ForecastSet:
    """Modulate a forecast set, with or without quantiles."""
    if fs.quantiles:
        return modulate_quantiles(fs, theta, mode, history_burden)
    if theta.value == 0.0:
        return fs
    return fs.with_values(modulate(fs.point, theta, mode, history_burden).tolist())


def history_burden_at(truth: EpidemicSeries, origin: int) -> float:
    """Observed cumulative count up to (excluding) position `origin`."""
    return math.fsum(truth.values[:origin])


def _validated_window(truth: EpidemicSeries, fs: ForecastSet) -> int:
    origin = resolve_origin(truth, fs)
    if origin < 0 or origin + fs.horizon_count > len(truth):
        raise OriginBeyondTruth(origin, len(truth))
    return origin


def prediction_error(truth: EpidemicSeries, forecasts: Sequence[ForecastSet], theta: Theta,
                     mode: ModulationMode = ModulationMode()) -> float:
    """Sum over origins and horizons of squared error of the modulated point forecasts."""
    squares = []
    for fs in forecasts:
        origin = _validated_window(truth, fs)
        history = history_burden_at(truth, origin) if mode.include_history else 0.0
        modulated = modulate(fs.point, theta, mode, history)
        for h, value in enumerate(modulated):
            residual = float(value) - truth.values[origin + h]
            squares.append(residual * residual)
    return math.fsum(squares)


class _Objective:
    """Vectorized prediction error over a fixed set of retrospective forecasts."""

    def __init__(self, truth: EpidemicSeries, forecasts: Sequence[ForecastSet], mode: ModulationMode):
        points, observed, burden = [], [], []
        for fs in forecasts:
            origin = _validated_window(truth, fs)
            values = np.asarray(fs.point, dtype=float)
            _check_nonnegative(values)
            history = history_burden_at(truth, origin) if mode.include_history else 0.0
            points.append(values)
            observed.append(np.asarray(truth.values[origin:origin + fs.horizon_count]))
            burden.append(_burden(values, mode, history))
        self.points = np.concatenate(points)
        self.observed = np.concatenate(observed)
        self.burden = np.concatenate(burden)

    def __call__(self, raw: float) -> float:
        residuals = self.points * np.exp(-raw * self.burden) - self.observed
        return float(np.dot(residuals, residuals))

    def exact(self, raw: float) -> float:
        if raw == 0.0:
            residuals = self.points - self.observed
        else:
            residuals = self.points * np.exp(-raw * self.burden) - self.observed
        return math.fsum((residuals * residuals).tolist())


def golden_section_search(f: Callable[[float], float], a: float, b: float, tol: float = 1e-9) -> tuple:
    """
    Golden-section search reusing one evaluation per iteration.

    Returns (x, f(x)) for the best point seen inside [a, b], assuming f is
    unimodal there.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = (a + b) / 2
        return x, f(x)

    n = int(math.ceil(math.log(tol / h) / math.log(INVPHI)))
    c = a + INVPHI2 * h
    d = a + INVPHI * h
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        if yc < yd:
            b, d, yd = d, c, yc
            h = INVPHI * h
            c = a + INVPHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h = INVPHI * h
            d = a + INVPHI * h
            yd = f(d)

    return (c, yc) if yc < yd else (d, yd)


def _grid_minima(values: np.ndarray) -> list[int]:
    """Indices of local minima of a sampled curve (endpoints included)."""
    n = len(values)
    minima = []
    for i in range(n):
        left = values[i - 1] if i > 0 else math.inf
        right = values[i + 1] if i < n - 1 else math.inf
        if values[i] <= left and values[i] <= right:
            minima.append(i)
    return minima


def fit_theta(truth: EpidemicSeries, forecasts: Sequence[ForecastSet],
              mode: ModulationMode = ModulationMode(),
              options: ThetaOptions = ThetaOptions()) -> ThetaEstimate:
    """Choose theta minimizing the prediction error of `forecasts` against `truth`."""
    if not forecasts:
        raise NoRetrospectiveOrigins(f"No retrospective forecasts for {truth.location}")

    scale = max(truth.values) if len(truth) else 0.0
    bracket = (0.0, options.upper)
    objective = _Objective(truth, forecasts, mode)
    at_zero = objective.exact(0.0)

    if scale <= 0.0:
        logger.debug(f"All-zero truth for {truth.location}: theta fixed at 0")
        return ThetaEstimate(ZERO_THETA, at_zero, at_zero, len(forecasts), bracket,
                             fixed=options.fixed_theta is not None)

    if options.fixed_theta is not None:
        theta = Theta(options.fixed_theta, scale)
        return ThetaEstimate(theta, objective.exact(theta.raw), at_zero, len(forecasts), bracket, fixed=True)

    def normalized(value: float) -> float:
        return objective(value / scale)

    grid = np.linspace(0.0, options.upper, options.grid_points + 1)
    sampled = np.array([normalized(v) for v in grid])
    minima = sorted(_grid_minima(sampled), key=lambda i: (sampled[i], i))[:options.restarts]

    best_value, best_objective = float(grid[minima[0]]), float(sampled[minima[0]])
    for i in minima:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        value, found = golden_section_search(normalized, lo, hi, options.tolerance)
        if found < best_objective:
            best_value, best_objective = value, found

    at_optimum = objective.exact(best_value / scale)
    if best_value <= 0.0 or not at_optimum < at_zero * (1.0 - IMPROVEMENT_MARGIN):
        return ThetaEstimate(Theta(0.0, scale), at_zero, at_zero, len(forecasts), bracket)

    return ThetaEstimate(Theta(best_value, scale), at_optimum, at_zero, len(forecasts), bracket)


def admissible_origins(truth_length: int, k: int, min_history: int,
                       stride: int = 1, anchor: Optional[int] = None) -> list[int]:
    """Origins t with min_history <= t <= truth_length - k, thinned to t = anchor (mod stride)."""
    first = max(min_history, 1)
    last = truth_length - k
    if anchor is None:
        anchor = first
    return [t for t in range(first, last + 1) if (t - anchor) % stride == 0]


def estimate_theta(truth: EpidemicSeries, spec: ForecasterSpec, k: int,
                   mode: ModulationMode = ModulationMode(),
                   options: ThetaOptions = ThetaOptions(),
                   forecast_at: Optional[Callable[[int], ForecastSet]] = None) -> ThetaEstimate:
    """
    Cross-validated theta for forecasts issued at the end of `truth`.

    Refits `spec` at every admissible earlier origin (or asks `forecast_at`,
    which lets callers share cached forecasts) and fits theta on the
    resulting k-step forecasts.
    """
    origins = admissible_origins(len(truth), k, spec.min_history, options.cv_stride, options.cv_anchor)
    if not origins:
        raise InsufficientHistory(spec.min_history + k, len(truth), "history for theta cross-validation")

    if forecast_at is None:
        def forecast_at(origin: int) -> ForecastSet:
            return fit_and_forecast(spec, truth.head(origin), k)

    forecasts = []
    for origin in origins:
        try:
            forecasts.append(forecast_at(origin).truncated(k))
        except EpimodError as e:
            logger.warning(f"Skipping cross-validation origin {origin} for {truth.location}: {e}")

    if not forecasts:
        raise NoRetrospectiveOrigins(f"Every cross-validation origin failed for {truth.location}")

    estimate = fit_theta(truth, forecasts, mode, options)
    logger.debug(
        f"theta={estimate.theta.value:.6g} (raw {estimate.theta.raw:.6g}) for {truth.location} "
        f"at origin {len(truth)} from {estimate.origins_used} origins"
    )
    return estimate
