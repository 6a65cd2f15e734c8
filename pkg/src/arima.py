"""
Automatic ARIMA by conditional sum of squares.

Orders (p, d, q) are searched over a grid and ranked by AICc. Every candidate is
scored on the same trailing sample (after max_d + max_p observations) so that
likelihoods are comparable across differencing orders. AR and MA polynomials are
parameterized through partial autocorrelations (tanh-transformed), which keeps
every candidate stationary and invertible without explicit root checks.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

logger = logging.getLogger(__name__)

_TINY_VARIANCE = 1e-300


@dataclass(frozen=True)
class ArimaFit:
    """Selected model and the state needed to forecast from the end of the history."""
    order: tuple
    ar: tuple
    ma: tuple
    mean: float
    sigma2: float
    aicc: float
    tail_levels: tuple  # last value of each differencing level 0..d-1
    tail_w: tuple       # last p (centered) differenced values
    tail_e: tuple       # last q innovations

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.sigma2, 0.0))


def pacf_to_coefficients(r: np.ndarray) -> np.ndarray:
    """Map partial autocorrelations in (-1, 1) to stationary AR coefficients (Durbin-Levinson)."""
    phi = np.zeros(len(r))
    for k in range(len(r)):
        previous = phi[:k].copy()
        phi[:k] = previous - r[k] * previous[::-1]
        phi[k] = r[k]
    return phi


def coefficients_to_pacf(phi: np.ndarray) -> np.ndarray:
    """Inverse of pacf_to_coefficients; raises ValueError for non-stationary input."""
    phi = np.array(phi, dtype=float)
    r = np.zeros(len(phi))
    for k in reversed(range(len(phi))):
        a = phi[k]
        if abs(a) >= 1.0:
            raise ValueError("coefficients are not stationary")
        r[k] = a
        previous = phi[:k].copy()
        phi[:k] = (previous + a * previous[::-1]) / (1.0 - a * a)
    return r


def _unpack(u: np.ndarray, p: int, q: int) -> tuple:
    ar = pacf_to_coefficients(np.tanh(u[:p]))
    ma = -pacf_to_coefficients(np.tanh(u[p:p + q]))
    return ar, ma


def css_residuals(x: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Innovations e_t = x_t - sum(ar_i x_{t-i}) - sum(ma_j e_{t-j}), zero pre-sample."""
    return lfilter(np.r_[1.0, -ar], np.r_[1.0, ma], x)


def _ols_ar(x: np.ndarray, p: int) -> np.ndarray:
    n = len(x)
    if n <= p + 1:
        return np.zeros(p)
    design = np.column_stack([x[p - i - 1:n - i - 1] for i in range(p)])
    coefficients, *_ = np.linalg.lstsq(design, x[p:], rcond=None)
    return coefficients


def _hannan_rissanen(x: np.ndarray, p: int, q: int) -> tuple:
    """Regress x_t on its own lags and on innovations estimated by a long autoregression."""
    n = len(x)
    if q == 0:
        return _ols_ar(x, p), np.zeros(0)

    long_order = min(max(p, q) + 4, n // 3)
    innovations = np.zeros(n)
    if long_order > 0:
        innovations = css_residuals(x, _ols_ar(x, long_order), np.zeros(0))
        innovations[:long_order] = 0.0

    start = long_order + max(p, q)
    if n - start <= p + q + 1:
        raise ValueError("series too short for Hannan-Rissanen")
    columns = [x[start - i - 1:n - i - 1] for i in range(p)]
    columns += [innovations[start - j - 1:n - j - 1] for j in range(q)]
    coefficients, *_ = np.linalg.lstsq(np.column_stack(columns), x[start:], rcond=None)
    return coefficients[:p], coefficients[p:]


def _start(x: np.ndarray, p: int, q: int) -> np.ndarray:
    """Deterministic optimizer start: Hannan-Rissanen estimates mapped to the unconstrained space."""
    try:
        ar, ma = _hannan_rissanen(x, p, q)
        r_ar = np.clip(coefficients_to_pacf(ar), -0.95, 0.95)
        r_ma = np.clip(coefficients_to_pacf(-ma), -0.95, 0.95)
        return np.arctanh(np.r_[r_ar, r_ma])
    except (ValueError, np.linalg.LinAlgError):
        return np.zeros(p + q)


def _fit_order(x: np.ndarray, p: int, q: int, start: int) -> tuple:
    """CSS fit of ARMA(p, q) to a centered series; returns (sse, ar, ma) on the scored sample."""
    scale = float(np.std(x))
    if scale == 0.0:
        scale = 1.0
    xs = x / scale

    if p + q == 0:
        sse = float(np.sum(xs[start:] ** 2))
        return sse * scale ** 2, np.zeros(0), np.zeros(0)

    def objective(u: np.ndarray) -> float:
        ar, ma = _unpack(u, p, q)
        e = css_residuals(xs, ar, ma)
        return float(np.dot(e[start:], e[start:]))

    u0 = _start(xs, p, q)
    result = minimize(
        objective,
        u0,
        method="Nelder-Mead",
        options={"maxiter": 200 * (p + q), "xatol": 1e-5, "fatol": 1e-10},
    )
    ar, ma = _unpack(result.x, p, q)
    return float(result.fun) * scale ** 2, ar, ma


def _aicc(sse: float, n_eff: int, n_params: int) -> float:
    sigma2 = max(sse / n_eff, _TINY_VARIANCE)
    log_likelihood = -0.5 * n_eff * (math.log(2.0 * math.pi * sigma2) + 1.0)
    return (-2.0 * log_likelihood + 2.0 * n_params
            + 2.0 * n_params * (n_params + 1) / (n_eff - n_params - 1))


def _constant_model(y: np.ndarray) -> ArimaFit:
    return ArimaFit(order=(0, 0, 0), ar=(), ma=(), mean=float(y[-1]), sigma2=0.0,
                    aicc=-math.inf, tail_levels=(), tail_w=(), tail_e=())


def fit_arima(values, max_p: int = 3, max_d: int = 2, max_q: int = 3) -> ArimaFit:
    """Select and fit ARIMA(p, d, q) with p, q <= max_p, max_q and d <= max_d by AICc."""
    y = np.asarray(values, dtype=float)
    n = len(y)

    if np.ptp(y) == 0.0:
        logger.warning(f"Degenerate series (all values {y[0]}): using constant-mean model")
        return _constant_model(y)

    common = max_d + max_p
    n_eff = n - common
    best = None

    for d, p, q in itertools.product(range(max_d + 1), range(max_p + 1), range(max_q + 1)):
        n_params = p + q + (1 if d == 0 else 0) + 1
        if n_eff - n_params - 1 <= 0:
            continue
        w = np.diff(y, n=d)
        mean = float(np.mean(w)) if d == 0 else 0.0
        x = w - mean
        sse, ar, ma = _fit_order(x, p, q, start=common - d)
        aicc = _aicc(sse, n_eff, n_params)
        if best is None or aicc < best[0]:
            best = (aicc, (p, d, q), ar, ma, mean, sse)

    if best is None:
        logger.warning(f"No ARIMA order estimable from {n} observations: using constant-mean model")
        return _constant_model(y)

    aicc, (p, d, q), ar, ma, mean, sse = best
    w = np.diff(y, n=d)
    x = w - mean
    e = css_residuals(x, ar, ma)
    tail_levels = tuple(float(np.diff(y, n=level)[-1]) for level in range(d))
    logger.debug(f"Selected ARIMA({p},{d},{q}) with AICc {aicc:.3f} on {n} observations")

    return ArimaFit(
        order=(p, d, q),
        ar=tuple(float(a) for a in ar),
        ma=tuple(float(m) for m in ma),
        mean=mean,
        sigma2=max(sse / n_eff, 0.0),
        aicc=aicc,
        tail_levels=tail_levels,
        tail_w=tuple(float(v) for v in x[len(x) - p:]) if p else (),
        tail_e=tuple(float(v) for v in e[len(e) - q:]) if q else (),
    )


def forecast_arima(fit: ArimaFit, k: int) -> np.ndarray:
    """k-step forecast on the original scale (future innovations set to zero)."""
    p, d, q = fit.order
    w_history = list(fit.tail_w)
    e_history = list(fit.tail_e)
    levels = list(fit.tail_levels)
    out = np.empty(k)

    for h in range(k):
        value = 0.0
        for i, coefficient in enumerate(fit.ar):
            value += coefficient * w_history[-(i + 1)]
        for j, coefficient in enumerate(fit.ma):
            value += coefficient * e_history[-(j + 1)]
        w_history.append(value)
        e_history.append(0.0)

        level_value = value + fit.mean
        for level in reversed(range(d)):
            level_value = levels[level] + level_value
            levels[level] = level_value
        out[h] = level_value

    return out
