import numpy as np
import pytest

from src.data.loader import export_dataset
from src.data.simulator import make_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_pair():
    """Depth-1 pair, x1 -> x2, five segments."""
    return make_dataset(d=2, E=5, n_e=128, depth=1, seed=3)


@pytest.fixture
def dataset_files(tmp_path):
    """Depth-1 pair written to disk as <tmp>/pair.csv and <tmp>/pair.truth.json."""
    data, truth = make_dataset(d=2, E=10, n_e=256, depth=1, seed=11)
    return export_dataset(data, truth, str(tmp_path / "pair"))


def numeric_gradient(f, x, eps=1e-6):
    """Central differences of a scalar function of an array."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[idx] = eps
        grad[idx] = (f(x + step) - f(x - step)) / (2 * eps)
    return grad


@pytest.fixture
def numeric_grad():
    return numeric_gradient
