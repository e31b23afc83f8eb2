import numpy as np
import pytest
from scipy.stats import ks_2samp

from src.engine import stats
from src.engine.stats import NullMethod
from src.errors import DegenerateDataError, DimensionError, ParameterError


def _naive_hsic(x, y, sigma):
    n = len(x)
    K = np.array([[np.exp(-(x[i] - x[j]) ** 2 / (2 * sigma ** 2)) for j in range(n)] for i in range(n)])
    L = np.array([[np.exp(-(y[i] - y[j]) ** 2 / (2 * sigma ** 2)) for j in range(n)] for i in range(n)])
    H = np.eye(n) - np.ones((n, n)) / n
    return np.trace(K @ H @ L @ H) / n ** 2


@pytest.mark.parametrize("seed", range(20))
def test_hsic_statistic_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(30)
    y = x ** 2 + rng.standard_normal(30)
    assert stats.hsic_statistic(x, y, bandwidth=1.0) == pytest.approx(_naive_hsic(x, y, 1.0), abs=1e-12)


def test_median_bandwidth():
    assert stats.median_bandwidth(np.array([0.0, 1.0, 3.0])) == pytest.approx(2.0)
    assert stats.median_bandwidth(np.zeros(5)) == 1.0


def test_permutation_test_detects_dependence(rng):
    x = rng.standard_normal(300)
    y = x + 0.1 * rng.standard_normal(300)
    result = stats.hsic_test(x, y, alpha=0.05, permutations=200)
    assert result.reject
    assert result.p_value == pytest.approx(1 / 201)
    assert result.method is NullMethod.PERMUTATION


def test_gamma_test_detects_dependence(rng):
    x = rng.standard_normal(300)
    y = np.abs(x) + 0.1 * rng.standard_normal(300)
    result = stats.hsic_test(x, y, alpha=0.01, method=NullMethod.GAMMA)
    assert result.reject
    assert result.p_value < 1e-3


def test_permutation_test_is_reproducible(rng):
    x, y = rng.standard_normal((2, 100))
    a = stats.hsic_test(x, y, 0.05, seed=4, permutations=200)
    b = stats.hsic_test(x, y, 0.05, seed=4, permutations=200)
    assert a == b
    assert 0 < a.p_value <= 1


def test_gamma_p_value_is_symmetric(rng):
    x = rng.standard_normal(200)
    y = np.sin(x) + rng.standard_normal(200)
    forward = stats.hsic_test(x, y, 0.05, method="gamma")
    backward = stats.hsic_test(y, x, 0.05, method="gamma")
    assert forward.p_value == pytest.approx(backward.p_value, rel=1e-9, abs=1e-12)


def test_hsic_argument_checks(rng):
    x = rng.standard_normal(50)
    with pytest.raises(ParameterError):
        stats.hsic_test(x, x, alpha=0.05, permutations=100)
    with pytest.raises(ParameterError):
        stats.hsic_test(x, x, alpha=1.5)
    with pytest.raises(ParameterError):
        stats.hsic_test(x, x, alpha=0.05, method=NullMethod.KS_INVARIANCE)
    with pytest.raises(DimensionError):
        stats.hsic_statistic(x, x[:40])
    with pytest.raises(ParameterError):
        stats.hsic_statistic(x[:3], x[:3])


def test_hsic_config_offsets_seed(rng):
    x, y = rng.standard_normal((2, 80))
    config = stats.HsicConfig(permutations=200, seed=10)
    assert stats.hsic_test_with(x, y, 0.05, config, seed_offset=2) == stats.hsic_test(
        x, y, 0.05, permutations=200, seed=12
    )


def test_subsampling_caps_the_gram_size(rng):
    x = rng.standard_normal(3000)
    y = x + rng.standard_normal(3000)
    result = stats.hsic_test(x, y, 0.05, method=NullMethod.GAMMA, max_samples=500)
    assert result.reject


def test_entropy_of_gaussian():
    x = np.random.default_rng(1).standard_normal(4096)
    assert stats.knn_entropy(x) == pytest.approx(0.5 * np.log(2 * np.pi * np.e), abs=0.05)


def test_entropy_of_laplace():
    x = np.random.default_rng(2).laplace(size=4096)
    assert stats.knn_entropy(x) == pytest.approx(1 + np.log(2), abs=0.05)


def test_entropy_handles_ties():
    x = np.repeat(np.arange(50, dtype=float), 10)
    assert np.isfinite(stats.knn_entropy(x))
    with pytest.raises(DegenerateDataError):
        stats.knn_entropy(np.ones(20))
    with pytest.raises(ParameterError):
        stats.knn_entropy(np.arange(3.0))


def test_mutual_information_of_correlated_gaussians():
    rng = np.random.default_rng(3)
    rho = 0.6
    x = rng.standard_normal(4096)
    y = rho * x + np.sqrt(1 - rho ** 2) * rng.standard_normal(4096)
    assert stats.mutual_information(x, y) == pytest.approx(-0.5 * np.log(1 - rho ** 2), abs=0.05)


def test_mutual_information_of_independent_samples():
    rng = np.random.default_rng(4)
    x, y = rng.standard_normal((2, 4096))
    assert abs(stats.mutual_information(x, y)) < 0.04


def test_standardize(rng):
    z = stats.standardize(3.0 + 2.0 * rng.standard_normal(100))
    assert z.values.mean() == pytest.approx(0.0, abs=1e-12)
    assert z.values.std() == pytest.approx(1.0)
    with pytest.raises(DegenerateDataError):
        stats.standardize(np.ones(4))


def test_ks_two_sample(rng):
    a = rng.standard_normal(200)
    b = rng.standard_normal(150) + 1.0
    statistic, p = stats.ks_two_sample(a, b)
    reference = ks_2samp(a, b, method="asymp")
    assert statistic == pytest.approx(reference.statistic)
    assert p == pytest.approx(reference.pvalue)
    assert p < 1e-6
    with pytest.raises(ParameterError):
        stats.ks_two_sample([], b)


def test_result_serializes():
    result = stats.IndependenceTestResult(0.1, 0.2, 0.0125, False, NullMethod.GAMMA)
    assert result.to_dict() == {
        "statistic": 0.1, "p_value": 0.2, "alpha_effective": 0.0125, "reject": False, "method": "gamma",
    }


@pytest.mark.slow
def test_gamma_null_calibration():
    rejections = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        x, y = rng.laplace(size=(2, 300))
        rejections += stats.hsic_test(x, y, 0.05, method=NullMethod.GAMMA).reject
    assert rejections / 200 <= 0.10


@pytest.mark.parametrize("seed", range(5))
def test_hsic_statistic_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(80)
    y = np.sin(2 * x) + 0.3 * rng.standard_normal(80)
    assert abs(stats.hsic_statistic(x, y) - stats.hsic_statistic(y, x)) < 1e-12


def test_hsic_statistic_absorbs_affine_maps(rng):
    x = rng.laplace(size=120)
    y = x ** 2 + rng.standard_normal(120)
    assert abs(stats.hsic_statistic(2 * x + 1, y) - stats.hsic_statistic(x, y)) < 1e-10


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_entropy_scaling_law(c):
    x = np.random.default_rng(5).laplace(size=4096)
    assert stats.knn_entropy(c * x) - stats.knn_entropy(x) == pytest.approx(np.log(c), abs=0.02)


def test_standardize_hand_example():
    z = stats.standardize([2.0, 4.0, 6.0])
    assert z.values == pytest.approx([-1.2247, 0.0, 1.2247], abs=1e-4)
    assert z.mean == 4.0
    assert z.std == pytest.approx(np.sqrt(8 / 3))
    again = stats.standardize(z.values)
    assert np.max(np.abs(again.values - z.values)) < 1e-12


def test_mutual_information_of_strongly_correlated_gaussians():
    rng = np.random.default_rng(6)
    rho = 0.8
    x = rng.standard_normal(4096)
    y = rho * x + np.sqrt(1 - rho ** 2) * rng.standard_normal(4096)
    assert stats.mutual_information(x, y) == pytest.approx(0.5108, abs=0.07)


def test_brown_forsythe_detects_a_spread_change(rng):
    same = [rng.standard_normal(200) for _ in range(3)]
    _, p_same = stats.brown_forsythe(same)
    _, p_shift = stats.brown_forsythe([rng.standard_normal(200), 3.0 * rng.standard_normal(200)])
    assert p_shift < 1e-6
    assert 0.0 <= p_same <= 1.0
    assert stats.brown_forsythe([np.ones(5), np.ones(5)]) == (0.0, 1.0)
    with pytest.raises(ParameterError):
        stats.brown_forsythe([rng.standard_normal(10)])


@pytest.mark.slow
def test_permutation_p_values_are_valid():
    alpha = 0.05
    rejections = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        x, y = rng.laplace(size=(2, 100))
        rejections += stats.hsic_test(x, y, alpha, permutations=200, seed=seed).p_value <= alpha
    assert rejections / 200 <= alpha + 0.03
