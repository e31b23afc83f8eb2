import json

import numpy as np
import pandas as pd
import pytest

from src.bench.experiments import (
    RESULT_COLUMNS, SUMMARY_COLUMNS, ExperimentConfig, ExperimentMode, run_benchmark, run_sweep, summarize,
    summary_path, trial_seed, write_results,
)
from src.engine.stats import NullMethod
from src.errors import ParameterError


def _tiny(mode, **kwargs):
    options = dict(mode=mode, segments=[3], samples_per_segment=[64], depths=[1], seeds=2, smica_restarts=1)
    options.update(kwargs)
    return ExperimentConfig(**options)


def test_trial_seed_depends_only_on_position():
    assert trial_seed(0, 1, 2) == trial_seed(0, 1, 2)
    seeds = {trial_seed(0, c, t) for c in range(3) for t in range(3)}
    assert len(seeds) == 9
    assert trial_seed(1, 0, 0) != trial_seed(0, 0, 0)


@pytest.mark.parametrize("overrides", [
    {"segments": []},
    {"seeds": 0},
    {"alpha": 1.5},
    {"segments": [2, 5]},
    {"jobs": 0},
    {"mode": "multivariate", "d": 2},
    {"methods": ["pc"]},
    {"mode": "linear-ica-bench", "methods": ["nonsens"]},
])
def test_invalid_configs_are_rejected(overrides):
    with pytest.raises(ParameterError):
        ExperimentConfig().apply_overrides(overrides).validate()


def test_three_segment_message():
    with pytest.raises(ParameterError, match="three distinct"):
        ExperimentConfig(segments=[2]).validate()


def test_from_json_and_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"mode": "no-effect", "seeds": 7, "hsic_method": "permutation"}))
    config = ExperimentConfig.from_json(path)
    assert config.mode is ExperimentMode.NO_EFFECT
    assert config.seeds == 7
    assert config.hsic_method is NullMethod.PERMUTATION
    assert config.apply_overrides({"seeds": 3, "alpha": None}).seeds == 3
    assert config.apply_overrides({"alpha": None}).alpha == 0.05


def test_from_json_errors(tmp_path):
    with pytest.raises(ParameterError):
        ExperimentConfig.from_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParameterError):
        ExperimentConfig.from_json(bad)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"sedes": 3}))
    with pytest.raises(ParameterError, match="sedes"):
        ExperimentConfig.from_json(unknown)
    with pytest.raises(ParameterError):
        ExperimentConfig().apply_overrides({"mode": "sideways"})


def test_default_methods_and_schemes():
    assert ExperimentConfig(mode="assume-cause").method_list[0] == "nonsens-lr"
    assert ExperimentConfig(mode="linear-ica-bench").source_scheme.value == "monotone"
    assert ExperimentConfig().source_scheme.value == "random"
    config = ExperimentConfig(mode="assume-cause")
    assert config.nonsens_config(2, 5).assume_cause
    assert config.nonsens_config(2, 5).tcl.depth == 2
    assert config.apply_overrides({"tcl_depth": 1}).nonsens_config(3, 5).tcl.depth == 1


def test_ica_bench_rows_and_recovery():
    config = _tiny("linear-ica-bench", samples_per_segment=[100], segments=[4])
    results = run_sweep(config)
    assert list(results.columns) == RESULT_COLUMNS
    assert len(results) == 3 * 2
    assert set(results["method"]) == {"smica", "fastica", "joint-diag"}
    assert (results["error"] == "").all()
    assert results["recovery"].between(0.0, 1.0).all()


def test_sweep_is_identical_for_any_job_count():
    config = _tiny("assume-cause", methods=["lingam", "reci"])
    serial = run_sweep(config)
    parallel = run_sweep(config.apply_overrides({"jobs": 2}))
    pd.testing.assert_frame_equal(serial, parallel)


def test_bivariate_sweep_summary_matches_rows():
    config = _tiny("assume-cause", methods=["lingam", "reci"], seeds=3)
    results = run_sweep(config)
    assert len(results) == 2 * 3
    assert set(results["flipped"]) <= {True, False}
    reci = results[results["method"] == "reci"]
    assert (reci["inconclusive"] == 0.0).all()

    summary = summarize(results, config.mode, config.alpha)
    assert list(summary.columns) == SUMMARY_COLUMNS
    row = summary[(summary["method"] == "reci") & (summary["metric"] == "accuracy")].iloc[0]
    assert row["mean"] == pytest.approx(reci["correct"].mean())
    assert row["trials"] == 3
    assert row["stderr"] == pytest.approx(reci["correct"].std(ddof=1) / np.sqrt(3))
    assert set(summary["metric"]) == {"accuracy", "decided_accuracy", "inconclusive_rate", "failure_rate"}


def test_no_effect_reference_is_one_minus_alpha():
    config = _tiny("no-effect", methods=["lingam"], alpha=0.05)
    summary = summarize(run_sweep(config), config.mode, config.alpha)
    tnr = summary[summary["metric"] == "true_negative_rate"].iloc[0]
    assert tnr["reference"] == pytest.approx(0.95)
    assert 0.0 <= tnr["mean"] <= 1.0


def test_failed_method_runs_become_error_rows():
    config = _tiny("bivariate-4test", samples_per_segment=[4], methods=["icp"])
    results = run_sweep(config)
    assert len(results) == 2
    assert results["error"].str.startswith("ParameterError").all()
    summary = summarize(results, config.mode, config.alpha)
    failure = summary[summary["metric"] == "failure_rate"].iloc[0]
    assert failure["mean"] == 1.0
    accuracy = summary[summary["metric"] == "accuracy"].iloc[0]
    assert accuracy["trials"] == 0


def test_multivariate_pc_rows():
    config = _tiny("multivariate", methods=["pc"], segments=[5], samples_per_segment=[128])
    results = run_sweep(config)
    assert (results["error"] == "").all()
    assert results["f1"].between(0.0, 1.0).all()
    assert (results["hamming"] >= 0).all()


def test_write_results_uses_lf_and_summary_name(tmp_path):
    config = _tiny("assume-cause", methods=["lingam"], seeds=1, output=str(tmp_path / "out" / "bench.csv"))
    results, summary = run_benchmark(config)
    target = tmp_path / "out" / "bench.csv"
    assert summary_path(target) == tmp_path / "out" / "bench.summary.csv"
    raw = target.read_bytes()
    assert b"\r\n" not in raw
    assert raw.splitlines()[0].decode() == ",".join(RESULT_COLUMNS)
    reread = pd.read_csv(summary_path(target))
    assert len(reread) == len(summary)

    first, _ = write_results(results, summary, tmp_path / "again.csv")
    assert first.read_bytes() == raw
