"""
Score-matching linear ICA for piecewise-stationary exponential-family sources.

Model: log p_e(z) = sum_j lambda_j(e) q(w_j^T z) - log Z(e). Score matching
removes Z(e), leaving for every segment e the objective

    sum_j lambda_j(e) mean q''(w_j^T z)
      + 1/2 sum_{j,k} lambda_j(e) lambda_k(e) (w_j^T w_k) mean q'(w_j^T z) q'(w_k^T z)

summed over segments with equal weight. It is quadratic in lambda, so the
lambda block has a closed form; W is updated by backtracking gradient steps
followed by row normalization.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment, nnls
from scipy.stats import rankdata
from sklearn.decomposition import FastICA

from ..errors import DegenerateDataError, DimensionError, ParameterError, UnmixingError

logger = logging.getLogger(__name__)

SMOOTH_ABS_EPS = 1e-4
DET_FLOOR = 1e-12
EIGEN_FLOOR = 1e-12


@dataclass(frozen=True)
class ScoreFamily:
    """Log-density shape q with its first three derivatives."""
    name: str
    q: Callable[[np.ndarray], np.ndarray]
    dq: Callable[[np.ndarray], np.ndarray]
    d2q: Callable[[np.ndarray], np.ndarray]
    d3q: Callable[[np.ndarray], np.ndarray]


def _neg_logcosh(s):
    return np.log(2.0) - np.logaddexp(s, -s)


def _neg_logcosh_d2(s):
    t = np.tanh(s)
    return -(1.0 - t * t)


def _neg_logcosh_d3(s):
    t = np.tanh(s)
    return 2.0 * t * (1.0 - t * t)


def _smooth_abs(s):
    return -np.sqrt(s * s + SMOOTH_ABS_EPS)


def _smooth_abs_d1(s):
    return -s / np.sqrt(s * s + SMOOTH_ABS_EPS)


def _smooth_abs_d2(s):
    return -SMOOTH_ABS_EPS / (s * s + SMOOTH_ABS_EPS) ** 1.5


def _smooth_abs_d3(s):
    return 3.0 * SMOOTH_ABS_EPS * s / (s * s + SMOOTH_ABS_EPS) ** 2.5


# Super-Gaussian log-density shapes; with this sign the fitted lambdas are >= 0.
FAMILIES: Dict[str, ScoreFamily] = {
    "logcosh": ScoreFamily("logcosh", _neg_logcosh, lambda s: -np.tanh(s), _neg_logcosh_d2, _neg_logcosh_d3),
    "smooth_abs": ScoreFamily("smooth_abs", _smooth_abs, _smooth_abs_d1, _smooth_abs_d2, _smooth_abs_d3),
}


def get_family(family) -> ScoreFamily:
    if isinstance(family, ScoreFamily):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise ParameterError(f"unknown score family {family!r}; choose from {sorted(FAMILIES)}") from None


@dataclass
class SmicaConfig:
    family: str = "logcosh"
    iters: int = 500
    step: float = 1.0
    seed: int = 0
    restarts: int = 5
    tol: float = 1e-10
    ridge: float = 1e-8
    max_backtracks: int = 30


@dataclass
class UnmixingModel:
    """Fitted unmixing. W has unit rows and acts on whitened data."""
    W: np.ndarray
    lambdas: np.ndarray
    family: str
    final_objective: float
    whitening: np.ndarray
    mean: np.ndarray
    history: List[float] = field(default_factory=list)

    @property
    def unmixing_matrix(self) -> np.ndarray:
        """W with whitening folded in: acts on centred raw data."""
        return self.W @ self.whitening

    def transform(self, Z: np.ndarray) -> np.ndarray:
        return (np.asarray(Z, dtype=float) - self.mean) @ self.unmixing_matrix.T

    def to_dict(self) -> Dict:
        return {
            "W": self.W.tolist(),
            "unmixing_matrix": self.unmixing_matrix.tolist(),
            "whitening": self.whitening.tolist(),
            "mean": self.mean.tolist(),
            "lambdas": self.lambdas.tolist(),
            "family": self.family,
            "objective": self.final_objective,
        }


class _Segments:
    """Row-to-segment bookkeeping shared by objective and gradient."""

    def __init__(self, labels: np.ndarray, n_segments: Optional[int] = None):
        labels = np.asarray(labels, dtype=int)
        E = int(labels.max()) + 1 if n_segments is None else n_segments
        counts = np.bincount(labels, minlength=E)
        if labels.min() < 0 or counts.shape[0] != E:
            raise DimensionError(f"labels must lie in [0, {E})")
        if np.any(counts == 0):
            raise ParameterError(f"empty segments: {np.flatnonzero(counts == 0).tolist()}")
        self.labels = labels
        self.E = E
        self.counts = counts
        self.row_weight = 1.0 / counts[labels]
        self._averaging = np.zeros((E, labels.shape[0]))
        self._averaging[labels, np.arange(labels.shape[0])] = self.row_weight

    def means(self, rows: np.ndarray) -> np.ndarray:
        """Per-segment mean of the rows of a 2-D array (E x columns)."""
        return self._averaging @ rows


def _segment_moments(W, Z, segments: _Segments, fam: ScoreFamily):
    Y = Z @ W.T
    d = W.shape[0]
    Q1 = fam.dq(Y)
    Q2 = fam.d2q(Y)
    A = segments.means(Q2)                                              # E x d
    B = segments.means((Q1[:, :, None] * Q1[:, None, :]).reshape(len(Y), d * d)).reshape(-1, d, d)
    return Y, Q1, Q2, A, B


def _check_inputs(W, lambdas, Z, labels):
    W = np.asarray(W, dtype=float)
    Z = np.asarray(Z, dtype=float)
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=float))
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"W must be square, got {W.shape}")
    if Z.ndim != 2 or Z.shape[1] != W.shape[1]:
        raise DimensionError(f"Z must have {W.shape[1]} columns")
    if lambdas.shape[1] != W.shape[0]:
        raise DimensionError("lambdas need one column per source")
    segments = _Segments(labels, lambdas.shape[0])
    return W, lambdas, Z, segments


def sm_objective(W, lambdas, Z, labels, family="logcosh") -> float:
    """Score-matching objective, summed over segments with equal weight."""
    W, lambdas, Z, segments = _check_inputs(W, lambdas, Z, labels)
    fam = get_family(family)
    _, _, _, A, B = _segment_moments(W, Z, segments, fam)
    G = W @ W.T
    first = float(np.sum(lambdas * A))
    second = 0.5 * float(np.einsum("ej,ek,jk,ejk->", lambdas, lambdas, G, B))
    return first + second


def sm_grad_w(W, lambdas, Z, labels, family="logcosh") -> np.ndarray:
    """Exact gradient of sm_objective with respect to W."""
    W, lambdas, Z, segments = _check_inputs(W, lambdas, Z, labels)
    fam = get_family(family)
    Y, Q1, Q2, _, B = _segment_moments(W, Z, segments, fam)
    Q3 = fam.d3q(Y)
    G = W @ W.T
    lam_rows = lambdas[segments.labels]
    weight = segments.row_weight[:, None]

    linear_part = ((lam_rows * Q3) * weight).T @ Z
    # derivative of the w_j^T w_k factor
    T = np.einsum("em,ej,emj->mj", lambdas, lambdas, B)
    gram_part = T @ W
    # derivative of the q'(w_j^T z) q'(w_k^T z) factor
    U = (Q1 * lam_rows) @ G
    moment_part = ((lam_rows * Q2 * U) * weight).T @ Z
    return linear_part + gram_part + moment_part


def _nonnegative_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """argmin_{lam >= 0} 1/2 lam^T M lam + b^T lam for positive definite M."""
    try:
        L = linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        return np.maximum(-np.linalg.solve(M, b), 0.0)
    target = -linalg.solve_triangular(L, b, lower=True)
    lam, _ = nnls(L.T, target)
    return lam


def lambda_closed_form(W, Z, labels, family="logcosh", ridge: float = 1e-8, n_segments: Optional[int] = None) -> np.ndarray:
    """Per-segment minimiser of the objective over lambda >= 0 for fixed W."""
    W = np.asarray(W, dtype=float)
    Z = np.asarray(Z, dtype=float)
    fam = get_family(family)
    segments = _Segments(labels, n_segments)
    _, _, _, A, B = _segment_moments(W, Z, segments, fam)
    G = W @ W.T
    d = W.shape[0]
    lambdas = np.empty((segments.E, d))
    for e in range(segments.E):
        M = G * B[e] + ridge * np.eye(d)
        try:
            lam = -np.linalg.solve(M, A[e])
        except np.linalg.LinAlgError as exc:
            raise UnmixingError(f"singular lambda system in segment {e}") from exc
        if np.any(lam < 0):
            lam = _nonnegative_solve(M, A[e])
        if not np.all(np.isfinite(lam)):
            raise UnmixingError(f"non-finite lambda in segment {e}")
        lambdas[e] = lam
    return lambdas


def _normalize_rows(W: np.ndarray) -> np.ndarray:
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def _random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def whiten(Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric whitening via eigendecomposition: returns (Zw, V, mean)."""
    Z = np.asarray(Z, dtype=float)
    mean = Z.mean(axis=0)
    centred = Z - mean
    cov = centred.T @ centred / Z.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.max() <= 0 or eigvals.min() <= EIGEN_FLOOR * eigvals.max():
        raise DegenerateDataError("representation covariance is singular; a column is constant or collinear")
    V = eigvecs @ np.diag(eigvals ** -0.5) @ eigvecs.T
    return centred @ V.T, V, mean


def _block_descent(W, Zw, labels, E, fam: ScoreFamily, config: SmicaConfig):
    lam = lambda_closed_form(W, Zw, labels, fam, config.ridge, E)
    J = sm_objective(W, lam, Zw, labels, fam)
    history = [J]
    step = config.step
    for it in range(config.iters):
        grad = sm_grad_w(W, lam, Zw, labels, fam)
        moved = False
        for _ in range(config.max_backtracks):
            candidate = _normalize_rows(W - step * grad)
            J_candidate = sm_objective(candidate, lam, Zw, labels, fam)
            if np.isfinite(J_candidate) and J_candidate < J:
                W, J, moved = candidate, J_candidate, True
                break
            step *= 0.5
        if moved:
            step = min(2.0 * step, config.step)

        lam_next = lambda_closed_form(W, Zw, labels, fam, config.ridge, E)
        J_next = sm_objective(W, lam_next, Zw, labels, fam)
        if not np.isfinite(J_next):
            raise UnmixingError(f"non-finite objective at iteration {it}")
        # the ridge term can leave the new lambdas marginally worse
        if J_next <= J:
            lam = lam_next
        else:
            J_next = J
        improvement = history[-1] - J_next
        J = J_next
        history.append(J)
        logger.debug("iteration %d objective %.10g", it, J)
        if not moved or improvement < config.tol * (1.0 + abs(J)):
            break
    return W, lam, J, history


def fit(Z: np.ndarray, labels: np.ndarray, config: SmicaConfig = None) -> UnmixingModel:
    """Block gradient descent from several random orthogonal starts; best objective wins."""
    config = config or SmicaConfig()
    if config.restarts < 1 or config.iters < 1:
        raise ParameterError("restarts and iters must be >= 1")
    fam = get_family(config.family)
    Z = np.asarray(Z, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if Z.ndim != 2 or labels.shape != (Z.shape[0],):
        raise DimensionError("Z must be a matrix with one label per row")
    if not np.all(np.isfinite(Z)):
        raise UnmixingError("representations contain non-finite values")
    E = _Segments(labels).E
    Zw, V, mean = whiten(Z)

    rng = np.random.default_rng(config.seed)
    best: Optional[UnmixingModel] = None
    for restart in range(config.restarts):
        W0 = _random_orthogonal(rng, Z.shape[1])
        try:
            with np.errstate(over="raise", invalid="raise"):
                W, lam, J, history = _block_descent(W0, Zw, labels, E, fam, config)
        except (UnmixingError, FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.warning("smica restart %d failed: %s", restart, exc)
            continue
        if not np.isfinite(J) or abs(np.linalg.det(W)) <= DET_FLOOR:
            logger.warning("smica restart %d rejected (objective %.4g, det %.3g)", restart, J, np.linalg.det(W))
            continue
        logger.debug("smica restart %d objective %.10g after %d iterations", restart, J, len(history) - 1)
        if best is None or J < best.final_objective:
            best = UnmixingModel(W, lam, fam.name, J, V, mean, history)
    if best is None:
        raise UnmixingError(f"all {config.restarts} smica restarts failed")
    logger.info("smica fit: objective %.6g", best.final_objective)
    return best


def fit_fastica(Z: np.ndarray, seed: int = 0) -> np.ndarray:
    """Maximum-likelihood style ICA baseline (logcosh FastICA); returns source estimates."""
    ica = FastICA(n_components=Z.shape[1], fun="logcosh", whiten="unit-variance", random_state=seed, max_iter=1000)
    return ica.fit_transform(np.asarray(Z, dtype=float))


def joint_diagonalize(matrices: np.ndarray, tol: float = 1e-12, max_sweeps: int = 200) -> np.ndarray:
    """Orthogonal V making V^T C_k V as diagonal as possible (Jacobi rotations)."""
    matrices = np.asarray(matrices, dtype=float)
    K, d, _ = matrices.shape
    A = np.concatenate(list(matrices), axis=1)
    V = np.eye(d)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                Ip = np.arange(p, K * d, d)
                Iq = np.arange(q, K * d, d)
                g = np.vstack([A[p, Ip] - A[q, Iq], A[p, Iq] + A[q, Ip]])
                gg = g @ g.T
                ton = gg[0, 0] - gg[1, 1]
                toff = gg[0, 1] + gg[1, 0]
                theta = 0.5 * np.arctan2(toff, ton + np.sqrt(ton * ton + toff * toff))
                c, s = np.cos(theta), np.sin(theta)
                if abs(s) > tol:
                    rotated = True
                    rot = np.array([[c, -s], [s, c]])
                    pair = [p, q]
                    V[:, pair] = V[:, pair] @ rot
                    A[pair, :] = rot.T @ A[pair, :]
                    col_p = c * A[:, Ip] + s * A[:, Iq]
                    col_q = -s * A[:, Ip] + c * A[:, Iq]
                    A[:, Ip], A[:, Iq] = col_p, col_q
        if not rotated:
            break
    return V


def fit_joint_diagonalization(Z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Second-order surrogate: jointly diagonalize whitened per-segment covariances."""
    Zw, _, _ = whiten(Z)
    labels = np.asarray(labels, dtype=int)
    covs = []
    for e in np.unique(labels):
        block = Zw[labels == e]
        block = block - block.mean(axis=0)
        covs.append(block.T @ block / block.shape[0])
    V = joint_diagonalize(np.array(covs))
    return Zw @ V


def recovery_score(estimated: np.ndarray, truth: np.ndarray, rank: bool = False) -> float:
    """Mean |correlation| of estimated and true sources under the best matching."""
    estimated = np.asarray(estimated, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if rank:
        estimated = np.apply_along_axis(rankdata, 0, estimated)
        truth = np.apply_along_axis(rankdata, 0, truth)
    d = truth.shape[1]
    corr = np.abs(np.corrcoef(estimated.T, truth.T)[:d, d:])
    rows, cols = linear_sum_assignment(-corr)
    return float(corr[rows, cols].mean())


def amari_distance(W: np.ndarray, A: np.ndarray) -> float:
    """Normalized Amari index of W A: 0 for a scaled permutation, at most 1."""
    P = np.abs(np.asarray(W, dtype=float) @ np.asarray(A, dtype=float))
    d = P.shape[0]
    rows = (P / P.max(axis=1, keepdims=True)).sum(axis=1) - 1.0
    cols = (P / P.max(axis=0, keepdims=True)).sum(axis=0) - 1.0
    return float((rows.sum() + cols.sum()) / (2.0 * d * (d - 1)))
