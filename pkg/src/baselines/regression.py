"""
Regression fits used by the regression-based baselines.

Kernel ridge regression with a Gaussian kernel stands in for Gaussian-process
regression: same posterior-mean predictor family, hyperparameters chosen by
cross-validation instead of marginal likelihood.
"""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from sklearn.kernel_ridge import KernelRidge
from sklearn.model_selection import KFold

from ..engine.stats import median_bandwidth
from ..errors import DegenerateDataError, DimensionError, ParameterError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 5


class RegressionMethod(str, Enum):
    OLS = "ols"
    KERNEL_RIDGE = "kernel-ridge"


@dataclass
class RegressionFit:
    method: RegressionMethod
    fitted: np.ndarray
    residuals: np.ndarray
    mse: float
    bandwidth: Optional[float] = None
    ridge: Optional[float] = None


@dataclass
class KernelRidgeConfig:
    bandwidth: Optional[float] = None
    ridge: Optional[float] = None              # per-sample ridge; sklearn alpha = ridge * n
    bandwidth_factors: Sequence[float] = (0.5, 1.0, 2.0)
    ridge_grid: Sequence[float] = (1e-4, 1e-3, 1e-2)
    folds: int = 5
    max_fit_samples: int = 1000
    seed: int = 0


def _as_design(x, y):
    x = np.asarray(x, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    if x.shape[0] < MIN_SAMPLES:
        raise ParameterError(f"regression needs at least {MIN_SAMPLES} samples")
    return x, y


def _fit(method, y, fitted, bandwidth=None, ridge=None) -> RegressionFit:
    residuals = y - fitted
    return RegressionFit(method, fitted, residuals, float(np.mean(residuals ** 2)), bandwidth, ridge)


def ols_fit(x, y) -> RegressionFit:
    """Least squares with intercept."""
    x, y = _as_design(x, y)
    if np.any(x.std(axis=0) == 0):
        raise DegenerateDataError("regressor has zero variance")
    design = np.column_stack([np.ones(x.shape[0]), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return _fit(RegressionMethod.OLS, y, design @ coef)


def _krr(bandwidth: float, ridge: float, n: int) -> KernelRidge:
    return KernelRidge(alpha=ridge * n, kernel="rbf", gamma=1.0 / (2.0 * bandwidth ** 2))


def _cv_error(x, y, bandwidth, ridge, config: KernelRidgeConfig) -> float:
    folds = KFold(n_splits=min(config.folds, x.shape[0]), shuffle=True, random_state=config.seed)
    errors = []
    for train, test in folds.split(x):
        model = _krr(bandwidth, ridge, len(train)).fit(x[train], y[train])
        errors.append(np.mean((y[test] - model.predict(x[test])) ** 2))
    return float(np.mean(errors))


def kernel_ridge_fit(x, y, bandwidth: Optional[float] = None, ridge: Optional[float] = None,
                     config: KernelRidgeConfig = None) -> RegressionFit:
    """Gaussian-kernel ridge regression; unset hyperparameters chosen by k-fold CV."""
    config = config or KernelRidgeConfig()
    x, y = _as_design(x, y)
    bandwidth = bandwidth if bandwidth is not None else config.bandwidth
    ridge = ridge if ridge is not None else config.ridge

    n = x.shape[0]
    rows = np.arange(n)
    if n > config.max_fit_samples:
        rows = np.linspace(0, n - 1, config.max_fit_samples).round().astype(int)
    x_fit = x[rows]
    offset = y.mean()
    y_fit = y[rows] - offset

    median = median_bandwidth(x_fit)
    bandwidths = [bandwidth] if bandwidth is not None else [median * f for f in config.bandwidth_factors]
    ridges = [ridge] if ridge is not None else list(config.ridge_grid)
    grid = list(itertools.product(bandwidths, ridges))
    if len(grid) > 1:
        scores = [_cv_error(x_fit, y_fit, s, r, config) for s, r in grid]
        bandwidth, ridge = grid[int(np.argmin(scores))]
        logger.debug("kernel ridge CV picked bandwidth %.4g ridge %.1e", bandwidth, ridge)
    else:
        bandwidth, ridge = grid[0]

    model = _krr(bandwidth, ridge, len(rows)).fit(x_fit, y_fit)
    return _fit(RegressionMethod.KERNEL_RIDGE, y, model.predict(x) + offset, bandwidth, ridge)
