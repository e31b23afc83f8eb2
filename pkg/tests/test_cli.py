import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import app

FIXTURES = Path(__file__).parent / "fixtures"


def _run(argv, capsys):
    code = app.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _write_pair_csv(path, x1, x2, E=4):
    labels = np.repeat(np.arange(E), len(x1) // E)
    frame = pd.DataFrame({"seg": labels, "x1": x1, "x2": x2})
    frame.to_csv(path, index=False, lineterminator="\n")
    return str(path)


def test_gen_writes_csv_and_truth(tmp_path, capsys):
    prefix = tmp_path / "pair"
    code, _, _ = _run(["gen", "--seed", "1", "--out", str(prefix)], capsys)
    assert code == app.EXIT_OK
    lines = (tmp_path / "pair.csv").read_bytes().split(b"\n")
    assert lines[0] == b"seg,x1,x2"
    assert len([line for line in lines if line]) == 5121
    truth = json.loads((tmp_path / "pair.truth.json").read_text())
    assert truth["dag"] == [[False, True], [False, False]]
    assert truth["seed"] == 1


def test_gen_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        _run(["gen", "--seed", "4", "-E", "3", "--samples", "50", "--depth", "2", "--out", str(tmp_path / name)], capsys)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.truth.json").read_bytes() == (tmp_path / "b.truth.json").read_bytes()


def test_gen_flags_override_config(tmp_path, capsys):
    config = tmp_path / "gen.json"
    config.write_text(json.dumps({"E": 4, "n_e": 20, "d": 3}))
    code, _, _ = _run(["gen", "--config", str(config), "--samples", "10", "--out", str(tmp_path / "g")], capsys)
    assert code == app.EXIT_OK
    frame = pd.read_csv(tmp_path / "g.csv")
    assert list(frame.columns) == ["seg", "x1", "x2", "x3"]
    assert len(frame) == 40


def test_gen_rejects_two_segments(tmp_path, capsys):
    code, _, err = _run(["gen", "-E", "2", "--out", str(tmp_path / "x")], capsys)
    assert code == app.EXIT_BAD_INPUT
    assert "three distinct" in err
    assert not (tmp_path / "x.csv").exists()


def test_unknown_config_keys_are_bad_input(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"segmnts": [3]}))
    assert _run(["gen", "--config", str(config), "--out", str(tmp_path / "x")], capsys)[0] == app.EXIT_BAD_INPUT
    assert _run(["bench", "--config", str(config)], capsys)[0] == app.EXIT_BAD_INPUT


def test_discover_missing_file(tmp_path, capsys):
    code, _, err = _run(["discover", str(tmp_path / "nope.csv"), "--method", "reci"], capsys)
    assert code == app.EXIT_BAD_INPUT
    assert "not found" in err


def test_discover_malformed_header(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("segment,a,b\n0,1,2\n0,2,3\n")
    assert _run(["discover", str(path)], capsys)[0] == app.EXIT_BAD_INPUT


def test_discover_reci_and_lingam(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x1 = rng.uniform(-1, 1, 400)
    path = _write_pair_csv(tmp_path / "pair.csv", x1, x1 ** 2 + 0.05 * rng.standard_normal(400))

    code, out, _ = _run(["discover", path, "--method", "reci"], capsys)
    assert code == app.EXIT_OK
    payload = json.loads(out)
    assert payload["decision"] == "x1->x2"
    assert payload["method"] == "reci"
    assert payload["dataset"] == path

    out_file = tmp_path / "lingam.json"
    code, out, _ = _run(["discover", path, "--method", "lingam", "--hsic-method", "gamma", "--out", str(out_file)],
                        capsys)
    assert code == app.EXIT_OK and out == ""
    payload = json.loads(out_file.read_text())
    assert payload["decision"] in ("x1->x2", "x2->x1", "inconclusive")
    assert len(payload["tests"]) == 2


def test_discover_constant_column_is_a_method_failure(tmp_path, capsys):
    rng = np.random.default_rng(1)
    path = _write_pair_csv(tmp_path / "flat.csv", np.ones(40), rng.standard_normal(40))
    code, _, err = _run(["discover", path, "--method", "lingam"], capsys)
    assert code == app.EXIT_METHOD_FAILED
    assert "DegenerateDataError" in err


def test_discover_pc_then_metrics(tmp_path, capsys):
    prefix = str(tmp_path / "four")
    _run(["gen", "--d", "4", "-E", "5", "--samples", "128", "--seed", "2", "--out", prefix], capsys)
    estimated = tmp_path / "est.json"
    code, _, _ = _run(["discover", prefix + ".csv", "--method", "pc", "--out", str(estimated)], capsys)
    assert code == app.EXIT_OK
    assert json.loads(estimated.read_text())["d"] == 4

    code, out, _ = _run(["metrics", "--estimated", str(estimated), "--truth", prefix + ".truth.json"], capsys)
    assert code == app.EXIT_OK
    metrics = json.loads(out)
    assert 0.0 <= metrics["f1"] <= 1.0
    assert metrics["hamming"] >= 0

    code, out, _ = _run(["metrics", "--estimated", prefix + ".truth.json", "--truth", prefix + ".truth.json"], capsys)
    assert json.loads(out) == {"f1": 1.0, "hamming": 0}


def test_bench_writes_results_and_summary(tmp_path, capsys):
    config = tmp_path / "bench.json"
    config.write_text(json.dumps({"segments": [3], "samples_per_segment": [64], "depths": [1], "seeds": 1}))
    out = tmp_path / "bench.csv"
    code, stdout, _ = _run(
        ["bench", "--config", str(config), "--mode", "assume-cause", "--method", "lingam", "--method", "reci",
         "--out", str(out)],
        capsys,
    )
    assert code == app.EXIT_OK
    assert "2 result rows" in stdout
    assert set(pd.read_csv(out)["method"]) == {"lingam", "reci"}
    assert (tmp_path / "bench.summary.csv").exists()


def test_bench_rejects_method_outside_mode(tmp_path, capsys):
    code, _, err = _run(["bench", "--mode", "multivariate", "--method", "reci", "--out", str(tmp_path / "b.csv")],
                        capsys)
    assert code == app.EXIT_BAD_INPUT
    assert "reci" in err


@pytest.mark.slow
def test_discover_nonsens_lr_on_generated_pair(dataset_files, capsys):
    code, out, _ = _run(["discover", dataset_files["csv"], "--method", "nonsens-lr", "--epochs", "100"], capsys)
    assert code == app.EXIT_OK
    payload = json.loads(out)
    assert payload["verdict"] in ("x1->x2", "x2->x1")
    assert np.isfinite(payload["R"])


def _fixture_truth():
    truth = json.loads((FIXTURES / "pair_depth1.truth.json").read_text())
    return "x1->x2" if truth["dag"][0][1] else "x2->x1"


def test_discover_linear_ica_on_fixture(capsys):
    code, out, _ = _run(["discover", str(FIXTURES / "pair_depth1.csv"), "--method", "linear-ica",
                         "--hsic-method", "gamma"], capsys)
    assert code == app.EXIT_OK
    payload = json.loads(out)
    assert payload["method"] == "linear-ica"
    assert len(payload["tests"]) == 4


def test_discover_reci_on_fixture_is_decisive(capsys):
    code, out, _ = _run(["discover", str(FIXTURES / "pair_depth1.csv"), "--method", "reci"], capsys)
    assert code == app.EXIT_OK
    assert json.loads(out)["decision"] in ("x1->x2", "x2->x1")


@pytest.mark.slow
def test_discover_nonsens_on_fixture_matches_truth(capsys):
    code, out, _ = _run(["discover", str(FIXTURES / "pair_depth1.csv"), "--method", "nonsens"], capsys)
    assert code == app.EXIT_OK
    assert json.loads(out)["decision"] == _fixture_truth()
