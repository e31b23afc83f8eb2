"""
Bivariate baselines: DirectLiNGAM, RESIT, nonlinear ICP, RECI and Linear-ICA NonSENS.

The test-based methods share the counting rule of the four-test procedure
(exactly one non-rejected test names the cause), or the p-value comparison
rule when an effect is assumed to exist.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data.simulator import SegmentedDataset
from ..engine.direction import DirectionScore, DisturbanceMap, likelihood_ratio
from ..engine.pipeline import four_test_verdict
from ..engine.smica import SmicaConfig
from ..engine.smica import fit as smica_fit
from ..engine.stats import (
    DEFAULT_K, HsicConfig, IndependenceTestResult, NullMethod, brown_forsythe, hsic_test_with, ks_two_sample,
    standardize,
)
from ..engine.verdict import CausalVerdict, Decision, decide_by_count, decide_by_pvalue
from ..errors import ParameterError
from .regression import KernelRidgeConfig, RegressionFit, kernel_ridge_fit, ols_fit

logger = logging.getLogger(__name__)

MIN_SEGMENT_ROWS = 5


@dataclass
class BaselineConfig:
    alpha: float = 0.05
    hsic: HsicConfig = field(default_factory=HsicConfig)
    kernel_ridge: KernelRidgeConfig = field(default_factory=KernelRidgeConfig)
    smica: SmicaConfig = field(default_factory=SmicaConfig)
    entropy_k: int = DEFAULT_K
    assume_cause: bool = False

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")


def _bivariate(data: SegmentedDataset) -> np.ndarray:
    if data.d != 2:
        raise ParameterError(f"bivariate baseline needs d = 2, got {data.d}")
    return data.X


def _decide(tests, config: BaselineConfig):
    if config.assume_cause:
        return decide_by_pvalue(tests)
    return decide_by_count(tests), False


def _residual_independence(
    data: SegmentedDataset, config: BaselineConfig, regress: Callable[[np.ndarray, np.ndarray], RegressionFit], method: str
) -> CausalVerdict:
    """Regress each variable on the other; test regressor against residual at alpha / 2."""
    config = config or BaselineConfig()
    config.validate()
    X = _bivariate(data)
    alpha_effective = config.alpha / 2
    tests = {}
    mse = {}
    for cause in range(2):
        effect = 1 - cause
        fit = regress(X[:, cause], X[:, effect])
        tests[(cause, f"residual_x{effect + 1}")] = hsic_test_with(
            X[:, cause], fit.residuals, alpha_effective, config.hsic, seed_offset=cause
        )
        mse[f"x{cause + 1}->x{effect + 1}"] = fit.mse
    decision, tie = _decide(tests, config)
    return CausalVerdict(decision, tests, config.alpha, alpha_effective, method=method, tie=tie, artifacts={"mse": mse})


def direct_lingam_bivariate(data: SegmentedDataset, config: BaselineConfig = None) -> CausalVerdict:
    """Linear regressions with HSIC on the residuals."""
    return _residual_independence(data, config, ols_fit, "lingam")


def resit_bivariate(data: SegmentedDataset, config: BaselineConfig = None) -> CausalVerdict:
    """Kernel ridge regressions with HSIC on the residuals."""
    config = config or BaselineConfig()
    return _residual_independence(
        data, config, lambda x, y: kernel_ridge_fit(x, y, config=config.kernel_ridge), "resit"
    )


def _invariance_test(residuals: np.ndarray, labels: np.ndarray, alpha_effective: float) -> IndependenceTestResult:
    """Residual invariance across segments.

    Each segment's residuals are KS-tested against all others (Bonferroni over
    segments) and the spread of all segments is compared by Brown-Forsythe; the
    two p-values are Bonferroni-combined.
    """
    segments = np.unique(labels)
    stats, p_values = [], []
    for e in segments:
        stat, p = ks_two_sample(residuals[labels == e], residuals[labels != e])
        stats.append(stat)
        p_values.append(p)
    ks_p = min(1.0, len(segments) * min(p_values))
    _, spread_p = brown_forsythe([residuals[labels == e] for e in segments])
    p_value = min(1.0, 2.0 * min(ks_p, spread_p))
    return IndependenceTestResult(max(stats), p_value, alpha_effective, p_value < alpha_effective, NullMethod.KS_INVARIANCE)


def icp_bivariate(data: SegmentedDataset, config: BaselineConfig = None) -> CausalVerdict:
    """Invariant causal prediction: the causal regression has segment-invariant residuals."""
    config = config or BaselineConfig()
    config.validate()
    X = _bivariate(data)
    if data.E < 2:
        raise ParameterError("invariance is undefined with a single segment")
    sizes = data.segment_sizes
    if np.any(sizes < MIN_SEGMENT_ROWS):
        raise ParameterError(f"every segment needs at least {MIN_SEGMENT_ROWS} rows for the KS test")

    alpha_effective = config.alpha / 2
    tests = {}
    for cause in range(2):
        effect = 1 - cause
        fit = kernel_ridge_fit(X[:, cause], X[:, effect], config=config.kernel_ridge)
        tests[(cause, "invariance")] = _invariance_test(fit.residuals, data.labels, alpha_effective)
    decision, tie = _decide(tests, config)
    return CausalVerdict(decision, tests, config.alpha, alpha_effective, method="icp", tie=tie)


def reci_bivariate(data: SegmentedDataset, config: BaselineConfig = None) -> CausalVerdict:
    """Regression error in the causal direction is smaller; always decides."""
    config = config or BaselineConfig()
    X = _bivariate(data)
    x1 = standardize(X[:, 0]).values
    x2 = standardize(X[:, 1]).values
    forward = kernel_ridge_fit(x1, x2, config=config.kernel_ridge).mse
    backward = kernel_ridge_fit(x2, x1, config=config.kernel_ridge).mse
    if forward < backward:
        decision, tie = Decision.X1_CAUSES, False
    else:
        decision, tie = Decision.X2_CAUSES, forward == backward
    return CausalVerdict(
        decision, {}, config.alpha, config.alpha, method="reci", tie=tie,
        artifacts={"mse": {"x1->x2": forward, "x2->x1": backward}},
    )


def _linear_unmixing(data: SegmentedDataset, config: BaselineConfig):
    standardized = data.standardized()
    model = smica_fit(standardized.X, standardized.labels, config.smica)
    return standardized, model


def linear_ica_nonsens(data: SegmentedDataset, config: BaselineConfig = None) -> CausalVerdict:
    """Four-test procedure with score-matching ICA applied to the observations directly."""
    config = config or BaselineConfig()
    config.validate()
    _bivariate(data)
    standardized, model = _linear_unmixing(data, config)
    verdict = four_test_verdict(
        standardized.X, model.transform(standardized.X), config.alpha, config.hsic, "linear-ica", config.assume_cause
    )
    verdict.artifacts = {"smica_objective": model.final_objective}
    verdict.models = {"unmixing": model}
    return verdict


def linear_ica_direction(data: SegmentedDataset, config: BaselineConfig = None) -> DirectionScore:
    """Likelihood ratio with the linear unmixing as g."""
    config = config or BaselineConfig()
    _bivariate(data)
    standardized, model = _linear_unmixing(data, config)
    g = DisturbanceMap.linear(model.unmixing_matrix, model.mean)
    return likelihood_ratio(standardized.X, model.transform(standardized.X), g, config.entropy_k)
