"""
Cubic smoothing spline on an equally spaced time index.

The penalized fit is g = (I + lam*K)^-1 y with K = Q R^-1 Q^T the roughness
matrix of a natural cubic spline on knots 0..n-1. K is diagonalized once per
length so every lambda on the grid costs a couple of matrix-vector products.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh, solve_banded

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplineFit:
    lam: float
    fitted: tuple
    boundary_value: float
    boundary_slope: float
    sigma: float
    edf: float
    gcv: float


@lru_cache(maxsize=8)
def _penalty_eigen(n: int) -> tuple:
    """Eigen-decomposition of the roughness matrix for n unit-spaced knots."""
    m = n - 2
    q = np.zeros((n, m))
    for j in range(m):
        q[j, j] = 1.0
        q[j + 1, j] = -2.0
        q[j + 2, j] = 1.0

    # R is tridiagonal: 2/3 on the diagonal, 1/6 off it
    banded = np.zeros((3, m))
    banded[0, 1:] = 1.0 / 6.0
    banded[1, :] = 2.0 / 3.0
    banded[2, :-1] = 1.0 / 6.0
    k = q @ solve_banded((1, 1), banded, q.T)

    eigenvalues, eigenvectors = eigh((k + k.T) / 2.0)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    # constants and lines are unpenalized; pin their eigenvalues to exact zero
    eigenvalues[:2] = 0.0
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return eigenvalues, eigenvectors


def lambda_grid(n_lambdas: int = 20, lambda_min: float = 1e-2, lambda_max: float = 1e8) -> np.ndarray:
    return np.logspace(math.log10(lambda_min), math.log10(lambda_max), n_lambdas)


def fit_smoothing_spline(values, lambdas=None) -> SplineFit:
    """Fit with the penalty that minimizes GCV = n*RSS / (n - tr(S))^2."""
    y = np.asarray(values, dtype=float)
    n = len(y)
    if lambdas is None:
        lambdas = lambda_grid()

    eigenvalues, eigenvectors = _penalty_eigen(n)
    projected = eigenvectors.T @ y

    best = None
    for lam in lambdas:
        shrink = 1.0 / (1.0 + lam * eigenvalues)
        fitted = eigenvectors @ (shrink * projected)
        rss = float(np.sum((y - fitted) ** 2))
        edf = float(np.sum(shrink))
        if n - edf <= 1e-9:
            continue
        gcv = n * rss / (n - edf) ** 2
        if best is None or gcv < best[0]:
            best = (gcv, float(lam), fitted, rss, edf)

    gcv, lam, fitted, rss, edf = best
    curve = CubicSpline(np.arange(n, dtype=float), fitted, bc_type="natural")
    slope = float(curve(n - 1.0, 1))
    sigma = math.sqrt(rss / (n - edf))
    logger.debug(f"Spline lambda={lam:.3g} edf={edf:.2f} gcv={gcv:.4g} on {n} observations")

    return SplineFit(
        lam=lam,
        fitted=tuple(fitted.tolist()),
        boundary_value=float(fitted[-1]),
        boundary_slope=slope,
        sigma=sigma,
        edf=edf,
        gcv=gcv,
    )


def forecast_spline(fit: SplineFit, k: int) -> np.ndarray:
    """Linear continuation from the last knot with the boundary derivative."""
    return fit.boundary_value + fit.boundary_slope * np.arange(1, k + 1, dtype=float)
