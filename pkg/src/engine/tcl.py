"""
Time-contrastive learning.

A multinomial classifier learns to predict the segment label of each
observation. Its last hidden layer (the trunk output, d units) recovers the
sources up to a pointwise nonlinearity and an invertible linear map; the
score-matching ICA in smica removes the linear map.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..data.simulator import SegmentedDataset
from ..errors import DimensionError, ParameterError, TrainingError
from . import smica
from .neuralnet import LEAKY_SLOPE, MlpParams, SgdConfig, accuracy, init_params, predict, train_sgd

logger = logging.getLogger(__name__)

MIN_SEGMENTS = 3
CHANCE_MARGIN = 0.02


@dataclass
class TclConfig:
    depth: int = 1
    hidden_width: Optional[int] = None        # defaults to 2d
    feature_activation: str = "abs"
    slope: float = LEAKY_SLOPE
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 300
    patience: Optional[int] = None
    seed: int = 0
    strict_chance: bool = False               # raise instead of flagging a near-chance fit

    def sgd(self) -> SgdConfig:
        return SgdConfig(
            learning_rate=self.learning_rate, momentum=self.momentum, batch_size=self.batch_size,
            epochs=self.epochs, patience=self.patience, seed=self.seed,
        )


@dataclass
class FeatureExtractor:
    """Trained segment classifier; the first n_trunk_layers layers form h(x)."""
    network: MlpParams
    n_trunk_layers: int
    train_accuracy: float
    n_segments: int
    losses: List[float] = field(default_factory=list)
    status: str = "ok"

    @property
    def trunk(self) -> MlpParams:
        return self.network.truncated(self.n_trunk_layers)

    @property
    def head(self):
        return self.network.weights[-1], self.network.biases[-1]

    @property
    def d(self) -> int:
        return self.network.widths[0]

    def to_dict(self):
        return {
            "network": self.network.to_dict(),
            "n_trunk_layers": self.n_trunk_layers,
            "train_accuracy": self.train_accuracy,
            "n_segments": self.n_segments,
            "status": self.status,
        }


@dataclass
class DisturbanceEstimate:
    """Estimated q(N), row-aligned with the input data."""
    N: np.ndarray
    model: smica.UnmixingModel
    representations: np.ndarray


def build_network(d: int, E: int, config: TclConfig) -> MlpParams:
    """Trunk of config.depth layers ending in d units, then a pinned E-class head."""
    if config.depth < 1:
        raise ParameterError(f"TCL depth must be >= 1, got {config.depth}")
    width = config.hidden_width or 2 * d
    widths = [d] + [width] * (config.depth - 1) + [d, E]
    activations = ["leaky_relu"] * (config.depth - 1) + [config.feature_activation, "linear"]
    return init_params(widths, seed=config.seed, activations=activations, slope=config.slope, pinned_head=True)


def tcl_train(data: SegmentedDataset, depth: Optional[int] = None, config: TclConfig = None) -> FeatureExtractor:
    """Fit the segment classifier on (X, labels)."""
    config = config or TclConfig()
    if depth is not None:
        config = TclConfig(**{**config.__dict__, "depth": depth})
    E = data.E
    if E < MIN_SEGMENTS:
        raise ParameterError(f"TCL needs at least {MIN_SEGMENTS} segments, got {E}")

    network = build_network(data.d, E, config)
    result = train_sgd(network, data.X, data.labels, config.sgd())
    acc = accuracy(result.params, data.X, data.labels)

    status = "ok"
    chance = 1.0 / E
    if acc <= chance + CHANCE_MARGIN:
        if config.strict_chance:
            raise TrainingError(f"TCL accuracy {acc:.3f} does not beat chance level {chance:.3f}")
        status = "near-chance"
        logger.warning("TCL accuracy %.3f is at chance level %.3f", acc, chance)
    else:
        logger.info("TCL accuracy %.3f (chance %.3f) after %d epochs", acc, chance, len(result.losses))
    return FeatureExtractor(result.params, config.depth, acc, E, result.losses, status)


def hidden_representations(extractor: FeatureExtractor, data) -> np.ndarray:
    """Trunk outputs h(x) for every row."""
    X = data.X if isinstance(data, SegmentedDataset) else np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[1] != extractor.d:
        raise DimensionError(f"extractor expects {extractor.d} columns, got {X.shape[1]}")
    return predict(extractor.trunk, X)


def recover_disturbances(
    extractor: FeatureExtractor, data: SegmentedDataset, config: smica.SmicaConfig = None
) -> DisturbanceEstimate:
    """Linear unmixing of the hidden representations with score-matching ICA."""
    H = hidden_representations(extractor, data)
    model = smica.fit(H, data.labels, config)
    return DisturbanceEstimate(model.transform(H), model, H)
