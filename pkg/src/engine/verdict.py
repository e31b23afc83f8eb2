"""
Causal verdicts and the decision rules shared by every test-based method.

Counting rule: out of the independence tests run between observed variables
and estimated disturbances (or residuals), exactly one must fail to reject;
the observed variable of that pair is the cause. Any other pattern is
Inconclusive.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .stats import IndependenceTestResult


class Decision(str, Enum):
    X1_CAUSES = "x1->x2"
    X2_CAUSES = "x2->x1"
    INCONCLUSIVE = "inconclusive"

    @property
    def cause(self) -> Optional[int]:
        """Index of the cause variable, None when inconclusive."""
        return {Decision.X1_CAUSES: 0, Decision.X2_CAUSES: 1}.get(self)

    @classmethod
    def from_cause(cls, cause: int) -> "Decision":
        return cls.X1_CAUSES if cause == 0 else cls.X2_CAUSES

    def mirrored(self) -> "Decision":
        """Decision for the same data with the two columns swapped."""
        return {
            Decision.X1_CAUSES: Decision.X2_CAUSES,
            Decision.X2_CAUSES: Decision.X1_CAUSES,
        }.get(self, Decision.INCONCLUSIVE)


# Test keys are (observed variable index, partner label).
TestKey = Tuple[int, str]


@dataclass
class CausalVerdict:
    """Outcome of a test-based direction procedure with all tests attached."""
    decision: Decision
    tests: Dict[TestKey, IndependenceTestResult]
    alpha: float
    alpha_effective: float
    method: str = "nonsens"
    tie: bool = False
    artifacts: Dict = field(default_factory=dict)     # JSON-friendly audit values
    models: Dict = field(default_factory=dict, repr=False)

    @property
    def non_rejected(self) -> List[TestKey]:
        return [key for key, test in self.tests.items() if not test.reject]

    def strength(self) -> float:
        """Evidence for the decision: p-value of the lone non-rejected test, 0 if inconclusive."""
        if self.decision is Decision.INCONCLUSIVE:
            return 0.0
        return max(self.tests[key].p_value for key in self.non_rejected)

    def summary(self) -> Dict:
        return {
            "method": self.method,
            "decision": self.decision.value,
            "alpha": self.alpha,
            "alpha_effective": self.alpha_effective,
            "tie": self.tie,
            "tests": {
                f"x{key[0] + 1}|{key[1]}": test.to_dict() for key, test in self.tests.items()
            },
            "artifacts": self.artifacts,
        }


def decide_by_count(tests: Dict[TestKey, IndependenceTestResult]) -> Decision:
    """One non-rejection identifies the cause; anything else is inconclusive."""
    accepted = [key for key, test in tests.items() if not test.reject]
    if len(accepted) != 1:
        return Decision.INCONCLUSIVE
    return Decision.from_cause(accepted[0][0])


def decide_by_pvalue(tests: Dict[TestKey, IndependenceTestResult]) -> Tuple[Decision, bool]:
    """Assume an effect exists: the variable with the larger best p-value is the cause.

    Returns the decision and a tie flag; an exact tie goes to X2.
    """
    best = {0: 0.0, 1: 0.0}
    for (var, _), test in tests.items():
        best[var] = max(best[var], test.p_value)
    if best[0] > best[1]:
        return Decision.X1_CAUSES, False
    return Decision.X2_CAUSES, best[0] == best[1]
