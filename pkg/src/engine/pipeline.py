"""
NonSENS decision procedures.

Bivariate: TCL + score-matching ICA recover the disturbances, then either the
four HSIC tests between observed variables and disturbances decide (a cause
only when exactly one pair looks independent), or, when an effect is assumed
to exist, the sign of the likelihood ratio decides.

Multivariate: PC fixes the skeleton and what orientations it can; each
remaining undirected edge goes to one of the bivariate engines.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import linear_sum_assignment

from ..data.simulator import SegmentedDataset
from ..errors import NonsensError, ParameterError
from .direction import DirectionScore, DisturbanceMap, PairView, likelihood_ratio
from .graph import Dag, pc_skeleton_orient
from .smica import SmicaConfig
from .stats import DEFAULT_K, HsicConfig, hsic_statistic, hsic_test_with
from .tcl import DisturbanceEstimate, FeatureExtractor, TclConfig, recover_disturbances, tcl_train
from .verdict import CausalVerdict, Decision, decide_by_count, decide_by_pvalue

logger = logging.getLogger(__name__)

N_TESTS = 4
DISTURBANCE_LABELS = ("n_a", "n_b")
ASSIGNMENT_ROWS = 500


class Engine(str, Enum):
    FOUR_TEST = "four-test"
    LIKELIHOOD_RATIO = "likelihood-ratio"


@dataclass
class NonsensConfig:
    alpha: float = 0.05
    tcl: TclConfig = field(default_factory=TclConfig)
    smica: SmicaConfig = field(default_factory=SmicaConfig)
    hsic: HsicConfig = field(default_factory=HsicConfig)
    entropy_k: int = DEFAULT_K
    ci_alpha: float = 0.05
    reuse_tcl: bool = False
    assume_cause: bool = False

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.ci_alpha < 1.0:
            raise ParameterError(f"ci_alpha must lie in (0, 1), got {self.ci_alpha}")


def four_test_verdict(
    X: np.ndarray,
    N: np.ndarray,
    alpha: float,
    hsic: HsicConfig,
    method: str = "nonsens",
    assume_cause: bool = False,
) -> CausalVerdict:
    """HSIC between each observed variable and each disturbance at level alpha / 4."""
    alpha_effective = alpha / N_TESTS
    tests = {}
    for var in range(2):
        for col, label in enumerate(DISTURBANCE_LABELS):
            tests[(var, label)] = hsic_test_with(X[:, var], N[:, col], alpha_effective, hsic, seed_offset=2 * var + col)
    if assume_cause:
        decision, tie = decide_by_pvalue(tests)
    else:
        decision, tie = decide_by_count(tests), False
    return CausalVerdict(decision, tests, alpha, alpha_effective, method=method, tie=tie)


def _require_bivariate(data: SegmentedDataset):
    if data.d != 2:
        raise ParameterError(f"bivariate procedure needs d = 2, got {data.d}")


def fit_disturbances(data: SegmentedDataset, config: NonsensConfig) -> Tuple[SegmentedDataset, FeatureExtractor, DisturbanceEstimate]:
    """Standardize, train TCL, unmix its hidden layer."""
    standardized = data.standardized()
    extractor = tcl_train(standardized, config=config.tcl)
    estimate = recover_disturbances(extractor, standardized, config.smica)
    return standardized, extractor, estimate


def nonsens_bivariate(data: SegmentedDataset, config: NonsensConfig = None) -> CausalVerdict:
    """Four-test NonSENS verdict for two variables."""
    config = config or NonsensConfig()
    config.validate()
    _require_bivariate(data)
    standardized, extractor, estimate = fit_disturbances(data, config)
    verdict = four_test_verdict(standardized.X, estimate.N, config.alpha, config.hsic, "nonsens", config.assume_cause)
    verdict.artifacts = {
        "tcl_accuracy": extractor.train_accuracy,
        "tcl_status": extractor.status,
        "smica_objective": estimate.model.final_objective,
    }
    verdict.models = {"extractor": extractor, "estimate": estimate}
    logger.info("nonsens verdict %s (tcl accuracy %.3f)", verdict.decision.value, extractor.train_accuracy)
    return verdict


def nonsens_direction(data: SegmentedDataset, config: NonsensConfig = None) -> DirectionScore:
    """Likelihood-ratio direction for two variables assumed to be causally linked."""
    config = config or NonsensConfig()
    config.validate()
    _require_bivariate(data)
    standardized, extractor, estimate = fit_disturbances(data, config)
    g = DisturbanceMap.from_model(extractor.trunk, estimate.model)
    return likelihood_ratio(standardized.X, estimate.N, g, config.entropy_k)


@dataclass
class EdgeDecision:
    edge: Tuple[int, int]
    oriented: Optional[Tuple[int, int]]     # None: left undirected
    strength: float = 0.0
    error: Optional[str] = None
    demoted: bool = False

    def to_dict(self) -> Dict:
        return {
            "edge": list(self.edge),
            "oriented": list(self.oriented) if self.oriented else None,
            "strength": self.strength,
            "error": self.error,
            "demoted": self.demoted,
        }


@dataclass
class HybridResult:
    dag: Dag
    pc_dag: Dag
    edges: List[EdgeDecision] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "dag": self.dag.to_dict(),
            "pc_dag": self.pc_dag.to_dict(),
            "edges": [e.to_dict() for e in self.edges],
        }


@dataclass
class _SharedFit:
    standardized: SegmentedDataset
    g: DisturbanceMap
    N: np.ndarray


def _shared_fit(data: SegmentedDataset, config: NonsensConfig) -> _SharedFit:
    standardized, extractor, estimate = fit_disturbances(data, config)
    return _SharedFit(standardized, DisturbanceMap.from_model(extractor.trunk, estimate.model), estimate.N)


def _assign_disturbances(shared: _SharedFit, i: int, j: int) -> Tuple[int, int]:
    """Disturbance columns (a, b) maximising HSIC(X_i, N_a) + HSIC(X_j, N_b)."""
    n = shared.N.shape[0]
    rows = np.linspace(0, n - 1, min(n, ASSIGNMENT_ROWS)).round().astype(int)
    X = shared.standardized.X[rows]
    N = shared.N[rows]
    scores = np.array([[hsic_statistic(X[:, v], N[:, c]) for c in range(N.shape[1])] for v in (i, j)])
    _, cols = linear_sum_assignment(-scores)
    return int(cols[0]), int(cols[1])


def _resolve_edge(
    data: SegmentedDataset, i: int, j: int, config: NonsensConfig, engine: Engine, shared: Optional[_SharedFit]
) -> EdgeDecision:
    try:
        if shared is None:
            pair = data.pair(i, j)
            if engine is Engine.FOUR_TEST:
                verdict = nonsens_bivariate(pair, config)
                cause, strength = verdict.decision.cause, verdict.strength()
            else:
                score = nonsens_direction(pair, config)
                cause, strength = (0 if score.R > 0 else 1), abs(score.R)
        else:
            a, b = _assign_disturbances(shared, i, j)
            X = shared.standardized.X[:, [i, j]]
            N = shared.N[:, [a, b]]
            if engine is Engine.FOUR_TEST:
                verdict = four_test_verdict(X, N, config.alpha, config.hsic, "nonsens", config.assume_cause)
                cause, strength = verdict.decision.cause, verdict.strength()
            else:
                view = PairView(shared.g, shared.standardized.X, (i, j), (a, b))
                score = likelihood_ratio(X, N, view, config.entropy_k)
                cause, strength = (0 if score.R > 0 else 1), abs(score.R)
    except NonsensError as exc:
        logger.warning("edge %d -- %d left undirected: %s", i, j, exc)
        return EdgeDecision((i, j), None, 0.0, str(exc))
    if cause is None:
        return EdgeDecision((i, j), None, 0.0)
    oriented = (i, j) if cause == 0 else (j, i)
    return EdgeDecision((i, j), oriented, float(strength))


def _repair_cycles(dag: Dag, decisions: List[EdgeDecision]):
    """Demote the weakest engine orientation on each directed cycle until none is left."""
    while not dag.is_acyclic():
        cycle = set(nx.find_cycle(dag.directed_graph()))
        candidates = [e for e in decisions if e.oriented in cycle and not e.demoted]
        if candidates:
            weakest = min(candidates, key=lambda e: e.strength)
            weakest.demoted = True
            dag.unorient(*weakest.oriented)
        else:
            u, v = sorted(cycle)[0]
            dag.unorient(u, v)
        logger.info("cycle repair: demoted an orientation on a %d-cycle", len(cycle))


def hybrid_multivariate(
    data: SegmentedDataset,
    config: NonsensConfig = None,
    engine: Engine = Engine.FOUR_TEST,
    jobs: int = 1,
) -> HybridResult:
    """PC skeleton and orientations, remaining undirected edges resolved pairwise."""
    config = config or NonsensConfig()
    config.validate()
    engine = Engine(engine)
    if data.d < 3:
        raise ParameterError(f"multivariate hybrid needs d >= 3, got {data.d}")

    standardized = data.standardized()
    pc_dag = pc_skeleton_orient(standardized.X, config.ci_alpha)
    dag = pc_dag.copy()
    undirected = pc_dag.undirected_edges()
    shared = _shared_fit(data, config) if (config.reuse_tcl and undirected) else None

    decisions = Parallel(n_jobs=jobs)(
        delayed(_resolve_edge)(data, i, j, config, engine, shared) for i, j in undirected
    )
    for decision in decisions:
        if decision.oriented is not None:
            dag.orient(*decision.oriented)
    _repair_cycles(dag, decisions)
    logger.info(
        "hybrid: %d of %d undirected edges oriented",
        sum(1 for e in decisions if e.oriented and not e.demoted), len(undirected),
    )
    return HybridResult(dag, pc_dag, list(decisions))
