"""
Likelihood-ratio causal direction for two variables.

With g the estimated map from observations to disturbances, the log-likelihood
ratio of X1 -> X2 against X2 -> X1 is

    R = -H(X1) - H(N_pi2) + E log|dg_pi2/dX2| + H(X2) + H(N_pi1) - E log|dg_pi1/dX1|

where pi assigns disturbance columns to causal roles. R > 0 favours X1 as the
cause. Equivalently R = -I(X1, N_pi2) + I(X2, N_pi1).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..errors import DimensionError, ParameterError
from .neuralnet import MlpParams, forward, vector_jacobian
from .smica import UnmixingModel
from .stats import DEFAULT_K, knn_entropy, mutual_information, standardize

logger = logging.getLogger(__name__)

JACOBIAN_FLOOR = 1e-12
FLOOR_WARNING_SHARE = 0.10
TIE_TOLERANCE = 1e-9
IDENTITY = (0, 1)
SWAPPED = (1, 0)


class DisturbanceMapLike(Protocol):
    n_inputs: int

    def __call__(self, X: np.ndarray) -> np.ndarray: ...

    def jacobian_column(self, X: np.ndarray, out_idx: int, in_idx: int) -> np.ndarray: ...


@dataclass
class DisturbanceMap:
    """g(x) = U (h(x) - mean) for a network trunk h and unmixing matrix U."""
    trunk: MlpParams
    unmixing: np.ndarray
    mean: np.ndarray

    @classmethod
    def from_model(cls, trunk: MlpParams, model: UnmixingModel) -> "DisturbanceMap":
        return cls(trunk, model.unmixing_matrix, model.mean)

    @classmethod
    def linear(cls, M: np.ndarray, mean: Optional[np.ndarray] = None) -> "DisturbanceMap":
        """g(x) = M (x - mean), as used when ICA is applied to the observations directly."""
        M = np.asarray(M, dtype=float)
        d = M.shape[1]
        trunk = MlpParams([np.eye(d)], [np.zeros(d)], ["linear"])
        return cls(trunk, M, np.zeros(d) if mean is None else np.asarray(mean, dtype=float))

    @property
    def n_inputs(self) -> int:
        return self.trunk.widths[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        H = forward(self.trunk, np.atleast_2d(X)).output
        return (H - self.mean) @ self.unmixing.T

    def jacobian_column(self, X: np.ndarray, out_idx: int, in_idx: int) -> np.ndarray:
        """Per-row dg_out/dx_in."""
        return vector_jacobian(self.trunk, np.atleast_2d(X), self.unmixing[out_idx])[:, in_idx]

    def swap_inputs(self) -> "DisturbanceMap":
        """Same map with the two input columns exchanged."""
        trunk = self.trunk.copy()
        trunk.weights[0] = trunk.weights[0][:, ::-1].copy()
        return DisturbanceMap(trunk, self.unmixing.copy(), self.mean.copy())

    def swap_outputs(self) -> "DisturbanceMap":
        return DisturbanceMap(self.trunk.copy(), self.unmixing[::-1].copy(), self.mean.copy())


@dataclass
class PairView:
    """A d-dimensional g restricted to inputs (i, j) and outputs (a, b), evaluated at full rows."""
    base: DisturbanceMap
    X_full: np.ndarray
    inputs: Tuple[int, int]
    outputs: Tuple[int, int]
    n_inputs: int = 2

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.base(self.X_full)[:, list(self.outputs)]

    def jacobian_column(self, X: np.ndarray, out_idx: int, in_idx: int) -> np.ndarray:
        if np.shape(X)[0] != self.X_full.shape[0]:
            raise DimensionError("pair view evaluates at the rows it was built with")
        return self.base.jacobian_column(self.X_full, self.outputs[out_idx], self.inputs[in_idx])


@dataclass
class JacobianTerm:
    value: float
    floored_share: float
    warning: Optional[str] = None


@dataclass
class PermutationChoice:
    pi: Tuple[int, int]
    tie: bool
    objectives: Dict[Tuple[int, int], float]


@dataclass
class DirectionScore:
    R: float
    pi: Tuple[int, int]                  # pi[0] plays N_pi1, pi[1] plays N_pi2
    entropy_x: Tuple[float, float]
    entropy_n: Tuple[float, float]       # H(N_pi1), H(N_pi2)
    jac_terms: Tuple[float, float]       # E log|dg_pi2/dX2|, E log|dg_pi1/dX1|
    verdict: str
    tie: bool = False
    permutation_tie: bool = False
    warnings: list = field(default_factory=list)

    def reassembled(self) -> float:
        return (
            -self.entropy_x[0] - self.entropy_n[1] + self.jac_terms[0]
            + self.entropy_x[1] + self.entropy_n[0] - self.jac_terms[1]
        )

    def to_dict(self) -> Dict:
        return {
            "R": self.R,
            "pi": list(self.pi),
            "entropy_x": list(self.entropy_x),
            "entropy_n": list(self.entropy_n),
            "jac_terms": list(self.jac_terms),
            "verdict": self.verdict,
            "tie": self.tie,
            "permutation_tie": self.permutation_tie,
            "warnings": list(self.warnings),
        }


def _check_bivariate(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 2:
        raise DimensionError(f"direction measures take two variables, got {X.shape[1]}")
    return X


def jacobian_expectation(g: DisturbanceMapLike, X: np.ndarray, out_idx: int, in_idx: int) -> JacobianTerm:
    """Sample mean of log|dg_out/dx_in|, with derivatives floored at JACOBIAN_FLOOR."""
    partials = np.abs(g.jacobian_column(X, out_idx, in_idx))
    floored = partials < JACOBIAN_FLOOR
    share = float(floored.mean())
    value = float(np.mean(np.log(np.where(floored, JACOBIAN_FLOOR, partials))))
    warning = None
    if share > FLOOR_WARNING_SHARE:
        warning = f"dg{out_idx + 1}/dx{in_idx + 1} floored on {share:.0%} of rows"
        logger.warning(warning)
    return JacobianTerm(value, share, warning)


def permutation_objectives(table: Dict[Tuple[int, int], float]) -> Dict[Tuple[int, int], float]:
    """Objective per permutation from a table of E log|dg_out/dx_in| keyed (out, in)."""
    return {pi: table[(pi[1], 1)] + table[(pi[0], 0)] for pi in (IDENTITY, SWAPPED)}


def choose_permutation(table: Dict[Tuple[int, int], float]) -> PermutationChoice:
    objectives = permutation_objectives(table)
    gap = objectives[IDENTITY] - objectives[SWAPPED]
    if abs(gap) < TIE_TOLERANCE:
        return PermutationChoice(IDENTITY, True, objectives)
    return PermutationChoice(IDENTITY if gap > 0 else SWAPPED, False, objectives)


def jacobian_table(g: DisturbanceMapLike, X: np.ndarray) -> Dict[Tuple[int, int], JacobianTerm]:
    return {(j, k): jacobian_expectation(g, X, j, k) for j in range(2) for k in range(2)}


def select_permutation(g: DisturbanceMapLike, X: np.ndarray) -> PermutationChoice:
    """Assignment of disturbance columns to (cause, effect) roles maximising the Jacobian terms."""
    X = _check_bivariate(X)
    terms = jacobian_table(g, X)
    return choose_permutation({key: term.value for key, term in terms.items()})


def _entropy_with_scale(samples: np.ndarray, k: int) -> float:
    """Entropy of the raw sample from the standardized one: H(x) = H(z) + ln sigma."""
    z = standardize(samples)
    return knn_entropy(z.values, k) + np.log(z.std)


def likelihood_ratio(
    X: np.ndarray,
    disturbances: np.ndarray,
    g: DisturbanceMapLike,
    k: int = DEFAULT_K,
    pi: Optional[Sequence[int]] = None,
) -> DirectionScore:
    """Log-likelihood ratio R for X1 -> X2 versus X2 -> X1.

    X is standardized per column before g and the entropies are evaluated, so R
    does not depend on the units of the observations.
    """
    X = _check_bivariate(X)
    N = np.asarray(disturbances, dtype=float)
    if N.shape != X.shape:
        raise DimensionError(f"disturbances {N.shape} not row-aligned with data {X.shape}")
    Xs = np.column_stack([standardize(X[:, 0]).values, standardize(X[:, 1]).values])

    terms = jacobian_table(g, Xs)
    warnings = [t.warning for t in terms.values() if t.warning]
    if pi is None:
        choice = choose_permutation({key: term.value for key, term in terms.items()})
        pi, permutation_tie = choice.pi, choice.tie
    else:
        pi, permutation_tie = tuple(int(p) for p in pi), False
        if sorted(pi) != [0, 1]:
            raise ParameterError(f"pi must be a permutation of (0, 1), got {pi}")

    entropy_x = (knn_entropy(Xs[:, 0], k), knn_entropy(Xs[:, 1], k))
    entropy_n = (_entropy_with_scale(N[:, pi[0]], k), _entropy_with_scale(N[:, pi[1]], k))
    jac_terms = (terms[(pi[1], 1)].value, terms[(pi[0], 0)].value)
    R = -entropy_x[0] - entropy_n[1] + jac_terms[0] + entropy_x[1] + entropy_n[0] - jac_terms[1]

    tie = R == 0.0
    verdict = "x1->x2" if R > 0 else "x2->x1"
    logger.info("likelihood ratio R=%.4f, pi=%s, verdict %s", R, pi, verdict)
    return DirectionScore(
        R=float(R), pi=tuple(pi), entropy_x=entropy_x, entropy_n=entropy_n, jac_terms=jac_terms,
        verdict=verdict, tie=tie, permutation_tie=permutation_tie, warnings=warnings,
    )


@dataclass
class MiIdentityCheck:
    lhs: float
    rhs: float
    gap: float


def check_mi_identity(
    X: np.ndarray,
    disturbances: np.ndarray,
    g: DisturbanceMapLike,
    pi: Optional[Sequence[int]] = None,
    k: int = DEFAULT_K,
) -> MiIdentityCheck:
    """Compare R with -I(X1, N_pi2) + I(X2, N_pi1) computed by the same kNN machinery."""
    score = likelihood_ratio(X, disturbances, g, k, pi)
    X = _check_bivariate(X)
    N = np.asarray(disturbances, dtype=float)
    p1, p2 = score.pi
    rhs = -mutual_information(X[:, 0], N[:, p2], k) + mutual_information(X[:, 1], N[:, p1], k)
    return MiIdentityCheck(score.R, float(rhs), float(score.R - rhs))
