import numpy as np
import pytest

from src.bench.experiments import ExperimentConfig
from src.data.simulator import SegmentedDataset, make_dataset
from src.engine import smica
from src.engine.smica import SmicaConfig
from src.engine.tcl import TclConfig, build_network, hidden_representations, recover_disturbances, tcl_train
from src.errors import DimensionError, ParameterError, TrainingError


def test_network_layout():
    params = build_network(d=2, E=5, config=TclConfig(depth=3))
    assert params.widths == [2, 4, 4, 2, 5]
    assert params.activations == ["leaky_relu", "leaky_relu", "abs", "linear"]
    assert params.pinned_head
    assert np.all(params.weights[-1][0] == 0)


def test_custom_hidden_width():
    params = build_network(d=3, E=4, config=TclConfig(depth=2, hidden_width=7))
    assert params.widths == [3, 7, 3, 4]


def test_requires_three_segments(rng):
    data = SegmentedDataset(rng.standard_normal((40, 2)), np.repeat([0, 1], 20))
    with pytest.raises(ParameterError):
        tcl_train(data, config=TclConfig(epochs=1))


def test_training_beats_chance():
    data, _ = make_dataset(d=2, E=5, n_e=256, depth=1, seed=2)
    extractor = tcl_train(data.standardized(), config=TclConfig(epochs=60))
    assert extractor.status == "ok"
    assert extractor.train_accuracy > 0.25
    assert extractor.n_trunk_layers == 1
    assert extractor.trunk.widths == [2, 2]


def test_untrained_network_on_stationary_data_is_flagged(rng):
    data = SegmentedDataset(rng.standard_normal((2000, 2)), np.repeat(np.arange(10), 200))
    extractor = tcl_train(data, config=TclConfig(epochs=1, learning_rate=1e-9))
    assert extractor.status == "near-chance"


def test_depth_argument_overrides_config(small_pair):
    data, _ = small_pair
    extractor = tcl_train(data.standardized(), depth=2, config=TclConfig(epochs=2))
    assert extractor.n_trunk_layers == 2
    assert extractor.trunk.widths == [2, 4, 2]


def test_recovered_disturbances_are_row_aligned(small_pair):
    data, _ = small_pair
    z = data.standardized()
    extractor = tcl_train(z, config=TclConfig(epochs=5))
    estimate = recover_disturbances(extractor, z, SmicaConfig(restarts=1, iters=50))
    H = hidden_representations(extractor, z)
    assert estimate.N.shape == z.X.shape
    assert np.allclose(estimate.representations, H)
    assert np.allclose(estimate.N, estimate.model.transform(H))
    with pytest.raises(DimensionError):
        hidden_representations(extractor, np.zeros((3, 3)))


def test_strict_chance_turns_the_flag_into_an_error(rng):
    data = SegmentedDataset(rng.standard_normal((2000, 2)), np.repeat(np.arange(10), 200))
    with pytest.raises(TrainingError, match="chance"):
        tcl_train(data, config=TclConfig(epochs=1, learning_rate=1e-9, strict_chance=True))


def test_shuffled_labels_train_to_chance():
    data, _ = make_dataset(d=2, E=10, n_e=256, depth=1, seed=4)
    shuffled = np.random.default_rng(0).permutation(data.labels)
    extractor = tcl_train(SegmentedDataset(data.standardized().X, shuffled), config=TclConfig(epochs=60))
    assert extractor.train_accuracy == pytest.approx(0.1, abs=0.05)


def _trained_on_linear_pair(seed):
    data, truth = make_dataset(d=2, E=10, n_e=512, depth=1, seed=seed)
    z = data.standardized()
    return z, truth, tcl_train(z, config=TclConfig(seed=seed))


@pytest.mark.slow
def test_recovered_disturbances_track_the_true_sources():
    recovered = 0
    for seed in range(5):
        z, truth, extractor = _trained_on_linear_pair(seed)
        estimate = recover_disturbances(extractor, z, SmicaConfig(seed=seed))
        # TCL recovers q(S), and q = |.| for Laplace sources
        recovered += smica.recovery_score(estimate.N, np.abs(truth.sources.S), rank=True) > 0.9
    assert recovered >= 4


@pytest.mark.slow
def test_smica_restarts_agree_on_the_representations():
    z, _, extractor = _trained_on_linear_pair(1)
    H = hidden_representations(extractor, z)
    runs = [smica.fit(H, z.labels, SmicaConfig(restarts=1, seed=seed)).transform(H) for seed in range(5)]
    for other in runs[1:]:
        assert smica.recovery_score(other, runs[0]) > 0.99


def test_experiment_flag_reaches_the_tcl_config():
    config = ExperimentConfig(strict_tcl=True)
    assert config.nonsens_config(1, 0).tcl.strict_chance
    assert not ExperimentConfig().nonsens_config(1, 0).tcl.strict_chance
