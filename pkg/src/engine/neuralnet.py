"""
Small feed-forward network with exact reverse-mode gradients.

Layer l computes z_l = a_l W_l^T + b_l and a_{l+1} = act_l(z_l), a_0 being the
input. Weights are stored (out, in). The last layer is normally linear and a
softmax cross-entropy loss sits on top of it for classification.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import DimensionError, ParameterError, TrainingError

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("leaky_relu", "abs", "linear")


def activate(z: np.ndarray, kind: str, slope: float = LEAKY_SLOPE) -> np.ndarray:
    if kind == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if kind == "abs":
        return np.abs(z)
    return z


def activation_grad(z: np.ndarray, kind: str, slope: float = LEAKY_SLOPE) -> np.ndarray:
    """Derivative of the activation; the negative branch is used at exactly zero."""
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    if kind == "abs":
        return np.where(z > 0, 1.0, -1.0)
    return np.ones_like(z)


@dataclass
class MlpParams:
    """Network parameters plus the per-layer activation names."""
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]
    slope: float = LEAKY_SLOPE
    pinned_head: bool = False   # class-0 row of the last layer held at zero

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        self.activations = list(self.activations)
        self.validate()

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def widths(self) -> List[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def validate(self):
        if not self.weights:
            raise ParameterError("network needs at least one layer")
        if len(self.biases) != len(self.weights) or len(self.activations) != len(self.weights):
            raise ParameterError("weights, biases and activations must have one entry per layer")
        for l, (W, b, kind) in enumerate(zip(self.weights, self.biases, self.activations)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise DimensionError(f"layer {l}: weight {W.shape} and bias {b.shape} disagree")
            if l > 0 and W.shape[1] != self.weights[l - 1].shape[0]:
                raise DimensionError(f"layer {l} expects {W.shape[1]} inputs, previous layer gives {self.weights[l - 1].shape[0]}")
            if kind not in ACTIVATIONS:
                raise ParameterError(f"unknown activation {kind!r}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ParameterError(f"layer {l} has non-finite parameters")
        if self.pinned_head and (np.any(self.weights[-1][0] != 0) or self.biases[-1][0] != 0):
            raise ParameterError("pinned head must have a zero class-0 row")

    def copy(self) -> "MlpParams":
        return MlpParams(
            [W.copy() for W in self.weights], [b.copy() for b in self.biases],
            list(self.activations), self.slope, self.pinned_head,
        )

    def truncated(self, n_layers: int) -> "MlpParams":
        """First n_layers layers as a standalone network."""
        if not 1 <= n_layers <= self.n_layers:
            raise ParameterError(f"cannot keep {n_layers} of {self.n_layers} layers")
        return MlpParams(
            [W.copy() for W in self.weights[:n_layers]], [b.copy() for b in self.biases[:n_layers]],
            self.activations[:n_layers], self.slope, False,
        )

    def to_dict(self) -> Dict:
        return {
            "widths": self.widths,
            "shapes": [list(W.shape) for W in self.weights],
            "weights": [W.ravel(order="C").tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": self.activations,
            "slope": self.slope,
            "pinned_head": self.pinned_head,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "MlpParams":
        weights = [np.asarray(w, dtype=float).reshape(shape) for w, shape in zip(payload["weights"], payload["shapes"])]
        return cls(weights, payload["biases"], payload["activations"], payload["slope"], payload["pinned_head"])

    def save_json(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle)

    @classmethod
    def load_json(cls, path: str) -> "MlpParams":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


@dataclass
class ForwardPass:
    pre_activations: List[np.ndarray]   # z_l per layer
    activations: List[np.ndarray]       # a_0 (input) ... a_L (output)

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]


def init_params(
    widths: Sequence[int],
    seed: int = 0,
    activations: Optional[Sequence[str]] = None,
    slope: float = LEAKY_SLOPE,
    pinned_head: bool = False,
) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    if len(widths) < 2:
        raise ParameterError("widths needs at least input and output sizes")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    if activations is None:
        activations = ["leaky_relu"] * (len(widths) - 2) + ["linear"]
    if pinned_head:
        weights[-1][0] = 0.0
    return MlpParams(weights, biases, list(activations), slope, pinned_head)


def _as_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.ndim != 2 or X.shape[1] != params.widths[0]:
        raise DimensionError(f"input width {X.shape[-1]} does not match network input {params.widths[0]}")
    return X


def forward(params: MlpParams, x: np.ndarray) -> ForwardPass:
    """Forward pass for one vector or a batch of row vectors."""
    single = np.ndim(x) == 1
    a = _as_batch(params, x)
    pre, post = [], [a]
    for W, b, kind in zip(params.weights, params.biases, params.activations):
        z = a @ W.T + b
        a = activate(z, kind, params.slope)
        pre.append(z)
        post.append(a)
    if single:
        return ForwardPass([z[0] for z in pre], [a[0] for a in post])
    return ForwardPass(pre, post)


def predict(params: MlpParams, X: np.ndarray) -> np.ndarray:
    return forward(params, np.atleast_2d(X)).output


def loss_and_grad(params: MlpParams, X: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    n = X.shape[0]
    if n == 0:
        raise ParameterError("empty batch")
    if y.shape != (n,):
        raise DimensionError("one label per row required")
    n_classes = params.widths[-1]
    if y.min() < 0 or y.max() >= n_classes:
        raise ParameterError(f"labels must lie in [0, {n_classes})")

    fp = forward(params, X)
    logits = fp.output
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(n)
    loss = float(-log_probs[rows, y].mean())

    delta = np.exp(log_probs)
    delta[rows, y] -= 1.0
    delta /= n
    delta = delta * activation_grad(fp.pre_activations[-1], params.activations[-1], params.slope)

    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    for l in range(params.n_layers - 1, -1, -1):
        grad_w[l] = delta.T @ fp.activations[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * activation_grad(
                fp.pre_activations[l - 1], params.activations[l - 1], params.slope
            )
    if params.pinned_head:
        grad_w[-1][0] = 0.0
        grad_b[-1][0] = 0.0
    return loss, Gradients(grad_w, grad_b)


def vector_jacobian(params: MlpParams, X: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Rows of d(cotangent . output)/d(input) for every input row."""
    X = _as_batch(params, X)
    fp = forward(params, X)
    delta = np.broadcast_to(np.asarray(cotangent, dtype=float), fp.output.shape)
    for l in range(params.n_layers - 1, -1, -1):
        delta = delta * activation_grad(fp.pre_activations[l], params.activations[l], params.slope)
        delta = delta @ params.weights[l]
    return delta


def input_jacobian(params: MlpParams, x: np.ndarray, output_index: int) -> np.ndarray:
    """Gradient of output_j with respect to the input, per row if x is a batch."""
    n_out = params.widths[-1]
    if not 0 <= output_index < n_out:
        raise ParameterError(f"output index {output_index} outside [0, {n_out})")
    unit = np.zeros(n_out)
    unit[output_index] = 1.0
    grad = vector_jacobian(params, x, unit)
    return grad[0] if np.ndim(x) == 1 else grad


@dataclass
class SgdConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 300
    decay_fraction: float = 1.0 / 3.0   # halve the rate every this share of epochs
    patience: Optional[int] = None      # epochs without loss improvement before stopping
    min_improvement: float = 1e-6
    seed: int = 0


@dataclass
class TrainResult:
    params: MlpParams
    losses: List[float] = field(default_factory=list)
    stopped_early: bool = False


def train_sgd(params: MlpParams, X: np.ndarray, y: np.ndarray, config: SgdConfig = None) -> TrainResult:
    """Minibatch SGD with momentum and step decay on the cross-entropy loss."""
    config = config or SgdConfig()
    if config.epochs < 1 or config.batch_size < 1 or config.learning_rate <= 0:
        raise ParameterError("epochs, batch_size and learning_rate must be positive")
    params = params.copy()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(config.seed)
    n = X.shape[0]
    vel_w = [np.zeros_like(W) for W in params.weights]
    vel_b = [np.zeros_like(b) for b in params.biases]
    decay_every = max(1, int(round(config.epochs * config.decay_fraction)))

    result = TrainResult(params)
    best, stale = np.inf, 0
    for epoch in range(config.epochs):
        lr = config.learning_rate * 0.5 ** (epoch // decay_every)
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grad(params, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            for l in range(params.n_layers):
                vel_w[l] = config.momentum * vel_w[l] - lr * grads.weights[l]
                vel_b[l] = config.momentum * vel_b[l] - lr * grads.biases[l]
                params.weights[l] += vel_w[l]
                params.biases[l] += vel_b[l]
            batch_losses.append(loss)

        epoch_loss = float(np.mean(batch_losses))
        result.losses.append(epoch_loss)
        logger.debug("epoch %d lr=%.4g loss=%.5f", epoch, lr, epoch_loss)
        if config.patience is not None:
            if epoch_loss < best - config.min_improvement:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= config.patience:
                    result.stopped_early = True
                    break
    if not all(np.all(np.isfinite(W)) for W in params.weights):
        raise TrainingError("parameters diverged")
    return result


def accuracy(params: MlpParams, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(predict(params, X), axis=1) == np.asarray(y)))
