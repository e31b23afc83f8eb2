"""
Statistical primitives: HSIC independence test, nearest-neighbour entropy and
mutual information, standardization and the two-sample Kolmogorov-Smirnov test.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import digamma
from scipy.stats import gamma, ks_2samp, levene
from sklearn.neighbors import KDTree

from ..errors import DegenerateDataError, DimensionError, EstimatorError, ParameterError

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-10
DEFAULT_K = 3

Bandwidth = Union[None, float, Tuple[float, float]]


class NullMethod(str, Enum):
    PERMUTATION = "permutation"
    GAMMA = "gamma"
    KS_INVARIANCE = "ks-invariance"   # per-segment KS plus Brown-Forsythe, Bonferroni-combined


@dataclass
class IndependenceTestResult:
    statistic: float
    p_value: float
    alpha_effective: float
    reject: bool
    method: NullMethod

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha_effective": self.alpha_effective,
            "reject": self.reject,
            "method": self.method.value,
        }


@dataclass
class HsicConfig:
    method: NullMethod = NullMethod.PERMUTATION
    permutations: int = 500
    max_samples: Optional[int] = 1000
    seed: int = 0


class Standardized(NamedTuple):
    values: np.ndarray
    mean: float
    std: float


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def median_bandwidth(x) -> float:
    """Median pairwise Euclidean distance, 1.0 when it is zero."""
    dists = pdist(_as_samples(x))
    med = float(np.median(dists)) if dists.size else 0.0
    return med if med > 0 else 1.0


def gaussian_gram(x, sigma: float) -> np.ndarray:
    sq = squareform(pdist(_as_samples(x), "sqeuclidean"))
    return np.exp(-sq / (2.0 * sigma * sigma))


def _centre(K: np.ndarray) -> np.ndarray:
    return K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()


def _bandwidths(x, y, bandwidth: Bandwidth) -> Tuple[float, float]:
    if bandwidth is None:
        return median_bandwidth(x), median_bandwidth(y)
    if np.isscalar(bandwidth):
        return float(bandwidth), float(bandwidth)
    return float(bandwidth[0]), float(bandwidth[1])


def _check_pair(x, y) -> Tuple[np.ndarray, np.ndarray]:
    x, y = _as_samples(x), _as_samples(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"sample counts differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 4:
        raise ParameterError("HSIC needs at least 4 samples")
    return x, y


def _subsample(x, y, max_samples: Optional[int]):
    n = x.shape[0]
    if max_samples is None or n <= max_samples:
        return x, y
    idx = np.linspace(0, n - 1, max_samples).round().astype(int)
    return x[idx], y[idx]


def hsic_statistic(x, y, bandwidth: Bandwidth = None) -> float:
    """Biased HSIC, (1/n^2) trace(K H L H), with Gaussian kernels."""
    x, y = _check_pair(x, y)
    sx, sy = _bandwidths(x, y, bandwidth)
    K = gaussian_gram(x, sx)
    L = gaussian_gram(y, sy)
    n = x.shape[0]
    return float(np.sum(_centre(K) * L) / (n * n))


def _gamma_p_value(Kc: np.ndarray, Lc: np.ndarray, K: np.ndarray, L: np.ndarray) -> Tuple[float, float]:
    """Moment-matched gamma null for n * HSIC."""
    n = K.shape[0]
    test_stat = float(np.sum(Kc * Lc) / n)
    var = (Kc * Lc / 6.0) ** 2
    var = (var.sum() - np.trace(var)) / n / (n - 1)
    var = var * 72.0 * (n - 4) * (n - 5) / n / (n - 1) / (n - 2) / (n - 3)
    K0 = K - np.diag(np.diag(K))
    L0 = L - np.diag(np.diag(L))
    mu_x = K0.sum() / n / (n - 1)
    mu_y = L0.sum() / n / (n - 1)
    mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / n
    if var <= 0 or mean <= 0:
        return test_stat, 1.0
    shape = mean * mean / var
    scale = var * n / mean
    return test_stat, float(gamma.sf(test_stat, shape, scale=scale))


def hsic_test(
    x,
    y,
    alpha: float,
    method: NullMethod = NullMethod.PERMUTATION,
    permutations: int = 500,
    seed: int = 0,
    bandwidth: Bandwidth = None,
    max_samples: Optional[int] = 1000,
) -> IndependenceTestResult:
    """HSIC independence test at level alpha (Bonferroni already applied by the caller)."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    method = NullMethod(method)
    x, y = _check_pair(x, y)
    x, y = _subsample(x, y, max_samples)
    n = x.shape[0]
    sx, sy = _bandwidths(x, y, bandwidth)
    K = gaussian_gram(x, sx)
    L = gaussian_gram(y, sy)
    Kc = _centre(K)
    statistic = float(np.sum(Kc * L) / (n * n))

    if method is NullMethod.PERMUTATION:
        if permutations < 200:
            raise ParameterError(f"permutation test needs >= 200 permutations, got {permutations}")
        exceed = 0
        for b in range(permutations):
            perm = np.random.default_rng([seed, b]).permutation(n)
            null = np.sum(Kc * L[np.ix_(perm, perm)]) / (n * n)
            exceed += null >= statistic
        p_value = (1.0 + exceed) / (1.0 + permutations)
    elif method is NullMethod.GAMMA:
        _, p_value = _gamma_p_value(Kc, _centre(L), K, L)
    else:
        raise ParameterError(f"{method.value} is not an HSIC null")

    p_value = float(min(max(p_value, 0.0), 1.0))
    return IndependenceTestResult(statistic, p_value, alpha, p_value < alpha, method)


def hsic_test_with(x, y, alpha: float, config: HsicConfig, seed_offset: int = 0) -> IndependenceTestResult:
    return hsic_test(
        x, y, alpha, method=config.method, permutations=config.permutations,
        seed=config.seed + seed_offset, max_samples=config.max_samples,
    )


def _jittered(samples: np.ndarray) -> np.ndarray:
    scale = np.std(samples, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    rng = np.random.default_rng(0)
    return samples + JITTER_SCALE * scale * rng.standard_normal(samples.shape)


def _kth_distances(samples: np.ndarray, k: int) -> np.ndarray:
    tree = KDTree(samples, metric="chebyshev")
    dist, _ = tree.query(samples, k=k + 1)
    return dist[:, k]


def knn_entropy(samples, k: int = DEFAULT_K) -> float:
    """Kozachenko-Leonenko differential entropy of a scalar sample, in nats."""
    x = np.asarray(samples, dtype=float).reshape(-1, 1)
    n = x.shape[0]
    if n < k + 1:
        raise ParameterError(f"need more than k={k} samples, got {n}")
    if np.all(x == x[0]):
        raise DegenerateDataError("all samples identical")
    r = _kth_distances(x, k)
    if np.any(r == 0):
        logger.debug("zero %d-NN distances, adding tie-breaking jitter", k)
        x = _jittered(x)
        r = _kth_distances(x, k)
        if np.any(r == 0):
            raise EstimatorError("zero nearest-neighbour distance after jitter")
    return float(digamma(n) - digamma(k) + np.mean(np.log(2.0 * r)))


def standardize(samples) -> Standardized:
    """Zero mean, unit population variance."""
    x = np.asarray(samples, dtype=float)
    mean = float(x.mean())
    std = float(x.std())
    if std == 0:
        raise DegenerateDataError("cannot standardize a constant sample")
    return Standardized((x - mean) / std, mean, std)


def _neighbour_counts(marginal: np.ndarray, radius: np.ndarray) -> np.ndarray:
    tree = KDTree(marginal, metric="chebyshev")
    return tree.query_radius(marginal, radius - 1e-15, count_only=True)


def mutual_information(x, y, k: int = DEFAULT_K) -> float:
    """Kraskov (algorithm 1) nearest-neighbour mutual information, in nats."""
    x, y = _as_samples(x), _as_samples(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionError("sample counts differ")
    n = x.shape[0]
    if n < k + 1:
        raise ParameterError(f"need more than k={k} samples, got {n}")
    joint = np.hstack([x, y])
    eps = _kth_distances(joint, k)
    if np.any(eps == 0):
        x, y = _jittered(x), _jittered(y)
        joint = np.hstack([x, y])
        eps = _kth_distances(joint, k)
    # counts include the point itself, so digamma(count) is digamma(n_x + 1)
    nx = _neighbour_counts(x, eps)
    ny = _neighbour_counts(y, eps)
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx) + digamma(ny)))


def ks_two_sample(a, b) -> Tuple[float, float]:
    """Two-sample KS statistic with its asymptotic p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ParameterError("KS test needs two nonempty samples")
    result = ks_2samp(a, b, method="asymp")
    return float(result.statistic), float(min(max(result.pvalue, 0.0), 1.0))


def brown_forsythe(groups: Sequence[np.ndarray]) -> Tuple[float, float]:
    """Equality of spread across groups (Levene's test on deviations from the median)."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(g.size < 2 for g in groups):
        raise ParameterError("Brown-Forsythe test needs at least two groups of two samples")
    result = levene(*groups, center="median")
    if not np.isfinite(result.pvalue):
        # every group constant: no spread difference to detect
        return 0.0, 1.0
    return float(result.statistic), float(min(max(result.pvalue, 0.0), 1.0))
