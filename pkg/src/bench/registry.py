"""
Method registry: one entry point per discovery method name used on the command line.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

from ..baselines.methods import (
    BaselineConfig, direct_lingam_bivariate, icp_bivariate, linear_ica_direction, linear_ica_nonsens,
    reci_bivariate, resit_bivariate,
)
from ..data.simulator import SegmentedDataset
from ..engine.graph import Dag, pc_skeleton_orient
from ..engine.pipeline import Engine, NonsensConfig, hybrid_multivariate, nonsens_bivariate, nonsens_direction
from ..engine.verdict import Decision
from ..errors import ParameterError

logger = logging.getLogger(__name__)

BIVARIATE_METHODS = ("nonsens", "nonsens-lr", "lingam", "resit", "icp", "reci", "linear-ica", "linear-ica-lr")
MULTIVARIATE_METHODS = ("pc", "pc-hybrid", "pc-hybrid-lr")
ICA_METHODS = ("smica", "fastica", "joint-diag")
DISCOVER_METHODS = BIVARIATE_METHODS + MULTIVARIATE_METHODS


@dataclass
class MethodOutcome:
    decision: Optional[Decision] = None
    dag: Optional[Dag] = None
    payload: Dict = field(default_factory=dict)


def run_method(name: str, data: SegmentedDataset, nonsens: NonsensConfig, baseline: BaselineConfig,
               jobs: int = 1) -> MethodOutcome:
    """Run one named method on a dataset."""
    logger.debug("running %s on %d rows, %d variables, %d segments", name, data.n_tot, data.d, data.E)
    if name == "nonsens":
        verdict = nonsens_bivariate(data, nonsens)
        return MethodOutcome(verdict.decision, payload=verdict.summary())
    if name == "nonsens-lr":
        score = nonsens_direction(data, nonsens)
        return MethodOutcome(Decision(score.verdict), payload={"method": name, **score.to_dict()})
    if name == "linear-ica-lr":
        score = linear_ica_direction(data, baseline)
        return MethodOutcome(Decision(score.verdict), payload={"method": name, **score.to_dict()})

    bivariate = {
        "lingam": direct_lingam_bivariate,
        "resit": resit_bivariate,
        "icp": icp_bivariate,
        "reci": reci_bivariate,
        "linear-ica": linear_ica_nonsens,
    }
    if name in bivariate:
        verdict = bivariate[name](data, baseline)
        return MethodOutcome(verdict.decision, payload=verdict.summary())

    if name == "pc":
        dag = pc_skeleton_orient(data.standardized().X, nonsens.ci_alpha)
        return MethodOutcome(dag=dag, payload={"method": name, **dag.to_dict(), "edges": dag.to_edge_list()})
    if name in ("pc-hybrid", "pc-hybrid-lr"):
        engine = Engine.FOUR_TEST if name == "pc-hybrid" else Engine.LIKELIHOOD_RATIO
        result = hybrid_multivariate(data, nonsens, engine, jobs=jobs)
        report = result.to_dict()
        payload = {
            "method": name, **result.dag.to_dict(), "edges": result.dag.to_edge_list(),
            "pc_dag": report["pc_dag"], "edge_decisions": report["edges"],
        }
        return MethodOutcome(dag=result.dag, payload=payload)
    raise ParameterError(f"unknown method {name!r}; choose from {', '.join(DISCOVER_METHODS)}")
