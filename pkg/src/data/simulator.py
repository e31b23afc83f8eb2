"""
Synthetic data generator for non-stationary causal discovery experiments.

Latent sources are piecewise stationary: every segment (experimental condition)
draws each source with its own scale parameter. Observations come out of a
mixing network whose layers are lower-triangular, so the variable order is a
causal order, with leaky-ReLU between layers for depth >= 2.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..errors import DegenerateDataError, DimensionError, ParameterError, SamplingError

logger = logging.getLogger(__name__)

LAMBDA_RANGE = (0.2, 2.0)
LEAKY_SLOPE = 0.2
DIAGONAL_RANGE = (0.5, 1.5)
EDGE_WEIGHT_RANGE = (0.5, 1.5)
CYCLIC_OFF_DIAGONAL = 0.6
MAX_CONDITION = 1e6
MAX_LAYER_RESAMPLES = 20
LINEAR_MAX_CONDITION = 50.0
MIN_SEGMENTS = 3
RANK_TOLERANCE = 1e-10

# Odd unnormalized density: log p(s) = -c * lam * |s| - s**2 / 2,
# c = 3 on the positive half-line and 1 on the negative one.
ODD_POSITIVE_FACTOR = 3.0
ODD_NEGATIVE_FACTOR = 1.0
REJECTION_ROUNDS = 200


class SourceFamily(str, Enum):
    """Distribution family of the latent sources."""
    LAPLACE_VARIANCE = "laplace"
    ODD_UNNORMALIZED = "odd"


class ScaleScheme(str, Enum):
    """How per-segment scale parameters are drawn."""
    RANDOM = "random"        # independent uniform draws
    MONOTONE = "monotone"    # increasing in the segment index for every source


class MixingMode(str, Enum):
    ACYCLIC = "acyclic"
    CYCLIC = "cyclic"


@dataclass
class SegmentedDataset:
    """Observation matrix with one segment label per row."""
    X: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.labels.size and not np.issubdtype(self.labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(self.labels, 1), 0)):
                raise ParameterError("segment labels must be integers")
        self.labels = self.labels.astype(int)
        self.validate()

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_tot(self) -> int:
        return self.X.shape[0]

    @property
    def E(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def segment_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.E)

    def validate(self):
        if self.X.ndim != 2:
            raise DimensionError(f"X must be a matrix, got shape {self.X.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.X.shape[0]:
            raise DimensionError("labels must be a vector with one entry per row of X")
        if self.X.shape[0] == 0:
            raise ParameterError("dataset has no rows")
        if not np.all(np.isfinite(self.X)):
            raise ParameterError("X contains non-finite entries")
        if self.labels.min() < 0:
            raise ParameterError("segment labels must be non-negative")
        sizes = np.bincount(self.labels)
        if np.any(sizes < 2):
            missing = np.flatnonzero(sizes < 2).tolist()
            raise ParameterError(f"segments {missing} have fewer than 2 rows")

    def standardized(self) -> "SegmentedDataset":
        """Zero mean, unit (population) variance per column over all segments."""
        std = self.X.std(axis=0)
        if np.any(std == 0):
            raise DegenerateDataError(f"constant columns: {np.flatnonzero(std == 0).tolist()}")
        return SegmentedDataset((self.X - self.X.mean(axis=0)) / std, self.labels.copy())

    def pair(self, i: int, j: int) -> "SegmentedDataset":
        """Restrict to columns (i, j), in that order."""
        return SegmentedDataset(self.X[:, [i, j]], self.labels.copy())

    def reorder(self, order: Sequence[int]) -> "SegmentedDataset":
        return SegmentedDataset(self.X[:, list(order)], self.labels.copy())

    def segment(self, e: int) -> np.ndarray:
        return self.X[self.labels == e]


@dataclass
class SourcePanel:
    """Latent sources together with their per-segment scale parameters."""
    S: np.ndarray
    lambdas: np.ndarray      # E x d
    family: SourceFamily
    labels: np.ndarray
    scheme: ScaleScheme = ScaleScheme.RANDOM

    @property
    def baseline(self) -> str:
        """Stationary part of the log-density shared by all segments."""
        if self.family is SourceFamily.ODD_UNNORMALIZED:
            return "-s**2 / 2"
        return "none"


@dataclass
class GroundTruth:
    dag: np.ndarray                  # dag[i, j] is the edge i -> j
    mixing_layers: List[np.ndarray]
    depth: int
    sources: SourcePanel
    mode: MixingMode
    seed: int
    slope: float = LEAKY_SLOPE

    def to_dict(self) -> Dict:
        return {
            "dag": self.dag.astype(bool).tolist(),
            "depth": self.depth,
            "seed": self.seed,
            "family": self.sources.family.value,
            "scheme": self.sources.scheme.value,
            "mode": self.mode.value,
        }


class RankCheck(NamedTuple):
    full_rank: bool
    condition_number: float


def _check_dimensions(d: int, E: int, n_e: int):
    if d < 2:
        raise ParameterError(f"d must be >= 2, got {d}")
    if E < MIN_SEGMENTS:
        raise ParameterError(
            f"E must be >= {MIN_SEGMENTS}, got {E}: causal identification needs at "
            "least three distinct experimental conditions"
        )
    if n_e < 2:
        raise ParameterError(f"n_e must be >= 2, got {n_e}")


def _draw_lambdas(rng: np.random.Generator, E: int, d: int, scheme: ScaleScheme) -> np.ndarray:
    lambdas = rng.uniform(LAMBDA_RANGE[0], LAMBDA_RANGE[1], size=(E, d))
    if scheme is ScaleScheme.MONOTONE:
        lambdas = np.sort(lambdas, axis=0)
    return lambdas


def sample_odd(rng: np.random.Generator, lam: float, n: int) -> np.ndarray:
    """Rejection sampler for the odd unnormalized density with scale lam.

    Proposal N(0, 1); a draw s is accepted with probability exp(-c * lam * |s|),
    which leaves exactly exp(-c * lam * |s| - s**2 / 2) up to normalization.
    """
    chunks = []
    collected = 0
    for _ in range(REJECTION_ROUNDS):
        proposal = rng.standard_normal(2 * (n - collected) + 16)
        factor = np.where(proposal >= 0, ODD_POSITIVE_FACTOR, ODD_NEGATIVE_FACTOR)
        accept = rng.random(proposal.size) < np.exp(-factor * lam * np.abs(proposal))
        kept = proposal[accept][: n - collected]
        chunks.append(kept)
        collected += kept.size
        if collected >= n:
            return np.concatenate(chunks)
    raise SamplingError(f"rejection sampler collected {collected}/{n} draws in {REJECTION_ROUNDS} rounds")


def gen_sources(
    d: int,
    E: int,
    n_e: int,
    family: SourceFamily = SourceFamily.LAPLACE_VARIANCE,
    scheme: ScaleScheme = ScaleScheme.RANDOM,
    seed: int = 0,
) -> SourcePanel:
    """Draw E * n_e rows of d independent piecewise-stationary sources."""
    _check_dimensions(d, E, n_e)
    family = SourceFamily(family)
    scheme = ScaleScheme(scheme)
    rng = np.random.default_rng(seed)

    lambdas = _draw_lambdas(rng, E, d, scheme)
    labels = np.repeat(np.arange(E), n_e)
    S = np.empty((E * n_e, d))
    for e in range(E):
        rows = slice(e * n_e, (e + 1) * n_e)
        if family is SourceFamily.LAPLACE_VARIANCE:
            # Laplace(0, b) has variance 2 b**2
            S[rows] = rng.laplace(0.0, lambdas[e], size=(n_e, d))
        else:
            for j in range(d):
                S[rows, j] = sample_odd(rng, lambdas[e, j], n_e)

    logger.debug("generated %s sources: d=%d E=%d n_e=%d", family.value, d, E, n_e)
    return SourcePanel(S=S, lambdas=lambdas, family=family, labels=labels, scheme=scheme)


def check_rank_condition(lambdas: np.ndarray) -> RankCheck:
    """Whether the segment-differenced parameter matrix has full column rank."""
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=float))
    d = lambdas.shape[1]
    L = lambdas - lambdas[0]
    s = np.linalg.svd(L, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return RankCheck(False, float("inf"))
    rank = int(np.sum(s > RANK_TOLERANCE * s[0]))
    if rank < d:
        return RankCheck(False, float("inf"))
    return RankCheck(True, float(s[0] / s[d - 1]))


def leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_inverse(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x > 0, x, x / slope)


def apply_mixing(S: np.ndarray, layers: List[np.ndarray], slope: float = LEAKY_SLOPE) -> np.ndarray:
    """X(1) = A(1) S, X(l) = A(l) f(X(l-1))."""
    X = S @ layers[0].T
    for A in layers[1:]:
        X = leaky_relu(X, slope) @ A.T
    return X


def invert_mixing(X: np.ndarray, layers: List[np.ndarray], slope: float = LEAKY_SLOPE) -> np.ndarray:
    """Undo apply_mixing layer by layer."""
    Z = np.asarray(X, dtype=float)
    for A in reversed(layers[1:]):
        Z = leaky_relu_inverse(np.linalg.solve(A, Z.T).T, slope)
    return np.linalg.solve(layers[0], Z.T).T


def _sample_layer(rng: np.random.Generator, mask: np.ndarray, mode: MixingMode) -> np.ndarray:
    d = mask.shape[0]
    for attempt in range(MAX_LAYER_RESAMPLES):
        A = np.diag(rng.uniform(*DIAGONAL_RANGE, size=d) * rng.choice([-1.0, 1.0], size=d))
        if mode is MixingMode.ACYCLIC:
            weights = rng.uniform(*EDGE_WEIGHT_RANGE, size=(d, d)) * rng.choice([-1.0, 1.0], size=(d, d))
            A = A + np.where(mask, weights, 0.0)
        else:
            A = A + np.where(mask, CYCLIC_OFF_DIAGONAL, 0.0)
        if np.linalg.cond(A) <= MAX_CONDITION:
            return A
        logger.debug("mixing layer rejected on attempt %d (ill-conditioned)", attempt + 1)
    raise SamplingError(f"no mixing layer with condition number <= {MAX_CONDITION:g} in {MAX_LAYER_RESAMPLES} draws")


def mix_dnn(
    sources: SourcePanel,
    depth: int = 1,
    mode: MixingMode = MixingMode.ACYCLIC,
    edge_prob: float = 1.0,
    seed: int = 0,
    slope: float = LEAKY_SLOPE,
) -> Tuple[SegmentedDataset, GroundTruth]:
    """Push sources through a depth-layer mixing network.

    Acyclic mode samples one strictly-lower-triangular edge support (each entry
    present with probability edge_prob) shared by all layers. Cyclic mode fills
    every off-diagonal entry with the same constant.
    """
    if depth < 1:
        raise ParameterError(f"depth must be >= 1, got {depth}")
    if not 0.0 <= edge_prob <= 1.0:
        raise ParameterError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    mode = MixingMode(mode)
    rng = np.random.default_rng(seed)
    d = sources.S.shape[1]

    if mode is MixingMode.ACYCLIC:
        mask = np.tril(rng.random((d, d)) < edge_prob, k=-1)
    else:
        mask = ~np.eye(d, dtype=bool)
    layers = [_sample_layer(rng, mask, mode) for _ in range(depth)]

    off_diagonal = ~np.eye(d, dtype=bool)
    support = np.any([(A != 0) & off_diagonal for A in layers], axis=0)
    # A[j, i] != 0 means X_j is driven by X_i
    dag = support.T.copy()

    X = apply_mixing(sources.S, layers, slope)
    data = SegmentedDataset(X, sources.labels.copy())
    truth = GroundTruth(dag=dag, mixing_layers=layers, depth=depth, sources=sources, mode=mode, seed=seed, slope=slope)
    return data, truth


def permute_variables(
    data: SegmentedDataset, truth: GroundTruth, order: Sequence[int]
) -> Tuple[SegmentedDataset, GroundTruth]:
    """Relabel variables: new column k is old column order[k]."""
    order = list(order)
    layers = [A.copy() for A in truth.mixing_layers]
    layers[-1] = layers[-1][order]
    moved = GroundTruth(
        dag=truth.dag[np.ix_(order, order)].copy(),
        mixing_layers=layers,
        depth=truth.depth,
        sources=truth.sources,
        mode=truth.mode,
        seed=truth.seed,
        slope=truth.slope,
    )
    return data.reorder(order), moved


def linear_mixture(sources: SourcePanel, seed: int = 0) -> Tuple[SegmentedDataset, np.ndarray]:
    """Z = A S with a dense, well-conditioned random A."""
    rng = np.random.default_rng(seed)
    d = sources.S.shape[1]
    for _ in range(MAX_LAYER_RESAMPLES):
        A = rng.standard_normal((d, d))
        if np.linalg.cond(A) <= LINEAR_MAX_CONDITION:
            return SegmentedDataset(sources.S @ A.T, sources.labels.copy()), A
    raise SamplingError("no well-conditioned linear mixing matrix found")


def make_dataset(
    d: int = 2,
    E: int = 10,
    n_e: int = 512,
    depth: int = 1,
    seed: int = 0,
    mode: MixingMode = MixingMode.ACYCLIC,
    family: SourceFamily = SourceFamily.LAPLACE_VARIANCE,
    scheme: ScaleScheme = ScaleScheme.RANDOM,
    edge_prob: Optional[float] = None,
) -> Tuple[SegmentedDataset, GroundTruth]:
    """Sources plus mixing from a single seed.

    edge_prob defaults to 1 for d = 2 (the bivariate setting always has an edge)
    and to 2 / (d - 1) otherwise, which gives d expected edges.
    """
    if edge_prob is None:
        edge_prob = 1.0 if d == 2 else 2.0 / (d - 1)
    source_seed, mixing_seed = np.random.SeedSequence(seed).generate_state(2)
    panel = gen_sources(d, E, n_e, family=family, scheme=scheme, seed=int(source_seed))
    data, truth = mix_dnn(panel, depth=depth, mode=mode, edge_prob=edge_prob, seed=int(mixing_seed))
    truth.seed = seed
    return data, truth


if __name__ == "__main__":
    data, truth = make_dataset(d=2, E=5, n_e=64, depth=2, seed=1)
    print(json.dumps({
        "rows": data.n_tot,
        "segments": data.E,
        "column_std": data.X.std(axis=0).round(3).tolist(),
        "rank_condition": check_rank_condition(truth.sources.lambdas)._asdict(),
        "truth": truth.to_dict(),
    }, indent=2))
