"""
Backtest plans: plain-text `key = value` files read with python-dotenv.

    scenario = two-wave            # or: truth = data/truth.csv
    horizons = 28
    origin_stride = 7
    mode = cumulative_window
    forecaster.arima.kind = arima
    forecaster.arima.max_p = 3
    forecaster.holt.kind = holt
    forecaster.holt.modulate = true
    theta.fixed = 0.5
    window.peak = 2022-01-01:2022-03-01
"""

import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values

from .epimod import ExponentMode, ModulationMode, ThetaOptions
from .errors import ConfigError, InvalidParameters
from .forecasters import HUB_QUANTILE_LEVELS, MIN_HISTORY, ForecasterKind, ForecasterSpec
from .scoring import AggregationWindow, WeightConvention, WisConfig
from .series import Cadence

logger = logging.getLogger(__name__)

_TOP_LEVEL_KEYS = {
    "name", "truth", "scenario", "horizons", "origin_stride", "first_origin", "cv_stride",
    "mode", "include_history", "wis_convention", "seed", "output_dir", "threads", "locations",
}
_THETA_KEYS = {"fixed", "grid_points", "upper"}
_INT_HYPERPARAMETERS = {"max_p", "max_d", "max_q", "n_lambdas", "max_history"}
_FLOAT_HYPERPARAMETERS = {"phi", "lambda_min", "lambda_max"}
_BOOL_HYPERPARAMETERS = {"damped"}


@dataclass
class ForecasterPlan:
    """One base model in a backtest and whether it gets an epimodulated arm."""
    spec: ForecasterSpec
    modulate: bool = True

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass
class BacktestPlan:
    """Everything run_backtest needs; None fields take cadence-dependent defaults."""
    name: str
    forecasters: list
    truth_path: Optional[Path] = None
    scenario: Optional[str] = None
    horizons: Optional[int] = None
    origin_stride: Optional[int] = None
    first_origin: Optional[int] = None
    cv_stride: Optional[int] = None
    mode: ModulationMode = field(default_factory=ModulationMode)
    wis: WisConfig = field(default_factory=WisConfig)
    theta: ThetaOptions = field(default_factory=ThetaOptions)
    seed: int = 0
    output_dir: Path = Path("runs")
    threads: Optional[int] = None
    locations: Optional[list] = None
    windows: list = field(default_factory=list)

    def horizons_for(self, cadence: Cadence) -> int:
        if self.horizons is not None:
            return self.horizons
        return 4 if cadence is Cadence.WEEKLY else 28

    def stride_for(self, cadence: Cadence) -> int:
        if self.origin_stride is not None:
            return self.origin_stride
        return 1 if cadence is Cadence.WEEKLY else 7

    def cv_stride_for(self, cadence: Cadence) -> int:
        return self.cv_stride if self.cv_stride is not None else self.stride_for(cadence)

    def first_origin_for(self, cadence: Cadence) -> int:
        if self.first_origin is not None:
            return self.first_origin
        k = self.horizons_for(cadence)
        return max(MIN_HISTORY[f.spec.kind] for f in self.forecasters) + k

    def validate(self) -> list[str]:
        """Validate the plan and return list of errors."""
        errors = []

        if (self.truth_path is None) == (self.scenario is None):
            errors.append("exactly one of 'truth' or 'scenario' is required")
        if self.truth_path is not None and not Path(self.truth_path).exists():
            errors.append(f"truth: file not found: {self.truth_path}")
        if not self.forecasters:
            errors.append("at least one forecaster.<name>.kind is required")
        for key in ("horizons", "origin_stride", "cv_stride", "first_origin", "threads"):
            value = getattr(self, key)
            if value is not None and value < 1:
                errors.append(f"{key}: must be >= 1, got {value}")
        if self.seed < 0:
            errors.append(f"seed: must be >= 0, got {self.seed}")

        return errors


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got '{raw}'") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got '{raw}'") from None


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(key, f"expected true or false, got '{raw}'")


def _parse_date(key: str, raw: str) -> date:
    try:
        return date.fromisoformat(raw.strip())
    except ValueError:
        raise ConfigError(key, f"invalid date '{raw}'") from None


def parse_window(key: str, raw: str, label: Optional[str] = None) -> AggregationWindow:
    """`start:end` (either side may be empty) into an AggregationWindow."""
    if ":" not in raw:
        raise ConfigError(key, f"expected start:end, got '{raw}'")
    start_text, end_text = raw.split(":", 1)
    start = _parse_date(key, start_text) if start_text.strip() else None
    end = _parse_date(key, end_text) if end_text.strip() else None
    try:
        return AggregationWindow(label or key, start=start, end=end)
    except ValueError as e:
        raise ConfigError(key, str(e)) from None


def parse_quantiles(key: str, raw: str) -> Optional[tuple]:
    lowered = raw.strip().lower()
    if lowered == "hub":
        return HUB_QUANTILE_LEVELS
    if lowered in ("none", ""):
        return None
    return tuple(_parse_float(key, part) for part in raw.split(","))


def _build_forecaster(name: str, fields: dict) -> ForecasterPlan:
    prefix = f"forecaster.{name}"
    if "kind" not in fields:
        raise ConfigError(f"{prefix}.kind", "missing")
    try:
        kind = ForecasterKind(fields.pop("kind").strip().lower())
    except ValueError:
        raise ConfigError(f"{prefix}.kind", "expected arima, holt, spline or naive") from None
    if kind is ForecasterKind.EXTERNAL:
        raise ConfigError(f"{prefix}.kind", "external forecasts cannot be backtested")

    modulate = _parse_bool(f"{prefix}.modulate", fields.pop("modulate", "true"))
    levels = parse_quantiles(f"{prefix}.quantiles", fields.pop("quantiles", "hub"))

    hyperparameters = {}
    for field_name, raw in fields.items():
        key = f"{prefix}.{field_name}"
        if field_name in _INT_HYPERPARAMETERS:
            hyperparameters[field_name] = _parse_int(key, raw)
        elif field_name in _FLOAT_HYPERPARAMETERS:
            hyperparameters[field_name] = _parse_float(key, raw)
        elif field_name in _BOOL_HYPERPARAMETERS:
            hyperparameters[field_name] = _parse_bool(key, raw)
        else:
            raise ConfigError(key, "unknown forecaster setting")

    try:
        spec = ForecasterSpec(kind, hyperparameters, quantile_levels=levels, name=name)
    except InvalidParameters as e:
        raise ConfigError(prefix, str(e)) from None
    return ForecasterPlan(spec=spec, modulate=modulate)


def parse_plan(values: dict, base_dir: Path = Path("."), name: str = "plan") -> BacktestPlan:
    """Build a plan from parsed key/value pairs; raises ConfigError naming the bad key."""
    top = {}
    theta = {}
    forecasters = {}
    windows = []

    for key, raw in values.items():
        raw = "" if raw is None else raw.strip()
        parts = key.split(".")
        if parts[0] == "forecaster" and len(parts) == 3:
            forecasters.setdefault(parts[1], {})[parts[2]] = raw
        elif parts[0] == "window" and len(parts) == 2:
            windows.append(parse_window(key, raw, label=parts[1]))
        elif parts[0] == "theta" and len(parts) == 2 and parts[1] in _THETA_KEYS:
            theta[parts[1]] = raw
        elif len(parts) == 1 and key in _TOP_LEVEL_KEYS:
            top[key] = raw
        else:
            raise ConfigError(key, "unknown key")

    def resolve(path_text: str) -> Path:
        path = Path(path_text)
        return path if path.is_absolute() else base_dir / path

    try:
        mode = ModulationMode(
            exponent=ExponentMode(top.get("mode", "cumulative_window")),
            include_history=_parse_bool("include_history", top.get("include_history", "false")),
        )
    except ValueError:
        raise ConfigError("mode", "expected cumulative_window or total_window") from None

    try:
        wis = WisConfig(weight_convention=WeightConvention(top.get("wis_convention", "standard_half_alpha")))
    except ValueError:
        raise ConfigError("wis_convention", "expected paper_literal or standard_half_alpha") from None

    def optional_int(key: str) -> Optional[int]:
        return _parse_int(key, top[key]) if top.get(key) else None

    cv_stride = optional_int("cv_stride")
    try:
        theta_options = ThetaOptions(
            fixed_theta=_parse_float("theta.fixed", theta["fixed"]) if theta.get("fixed") else None,
            grid_points=_parse_int("theta.grid_points", theta["grid_points"]) if theta.get("grid_points") else 1000,
            upper=_parse_float("theta.upper", theta["upper"]) if theta.get("upper") else 10.0,
        )
    except InvalidParameters as e:
        raise ConfigError("theta", str(e)) from None

    locations = None
    if top.get("locations"):
        locations = [part.strip() for part in top["locations"].split(",") if part.strip()]

    return BacktestPlan(
        name=top.get("name") or name,
        forecasters=[_build_forecaster(n, fields) for n, fields in sorted(forecasters.items())],
        truth_path=resolve(top["truth"]) if top.get("truth") else None,
        scenario=top.get("scenario") or None,
        horizons=optional_int("horizons"),
        origin_stride=optional_int("origin_stride"),
        first_origin=optional_int("first_origin"),
        cv_stride=cv_stride,
        mode=mode,
        wis=wis,
        theta=theta_options,
        seed=optional_int("seed") or 0,
        output_dir=resolve(top.get("output_dir") or "runs"),
        threads=optional_int("threads"),
        locations=locations,
        windows=windows,
    )


def load_plan(path) -> BacktestPlan:
    """Read, parse and validate a plan file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")

    plan = parse_plan(dotenv_values(path), base_dir=path.parent, name=path.stem)
    errors = plan.validate()
    if errors:
        raise ConfigError(errors[0].split(":", 1)[0] if ":" in errors[0] else "plan", "; ".join(errors))

    logger.info(
        f"Loaded plan '{plan.name}': {len(plan.forecasters)} forecasters, "
        f"source {plan.truth_path or plan.scenario}"
    )
    return plan
