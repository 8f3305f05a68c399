import json

import numpy as np
import pytest

from artifact.cli import main
from artifact.diagnostics import stochastic_errors
from artifact.io import read_observations, read_truth
from artifact.model import (
    Dimensions,
    NoiseModel,
    generate_dataset,
    random_ground_truth,
    uniform_distribution,
)


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def generated(tmp_path):
    obs = tmp_path / "obs.txt"
    assert run("generate", "--dims", 10, 10, "--rank", 2, "--sigma", 1, "--a", 1, "--n", 400,
               "--seed", 5, "--out", obs) == 0
    return obs


def test_round_trip_matches_library(generated, tmp_path):
    obs = generated
    assert run("fit", "--data", obs, "--pi", f"{obs}.pi", "--lambda-mode", "optimal", "--out",
               tmp_path / "fit.json") == 0
    fitted = json.loads((tmp_path / "fit.json").read_text())
    assert fitted["converged"] and fitted["seed"] == 5 and fitted["warnings"] == []
    assert run("diagnose", "--pi", f"{obs}.pi", "--truth", f"{obs}.truth.json", "--data", obs,
               "--mu-samples", 5, "--out", tmp_path / "diag.json") == 0
    rep = json.loads((tmp_path / "diag.json").read_text())

    d = Dimensions(10, 10)
    pi, truth = uniform_distribution(d), random_ground_truth(d, 2, 1.0, seed=5)
    ds = generate_dataset(pi, truth, NoiseModel("gaussian", 1.0), 400, 5)
    M1, M2 = stochastic_errors(pi, ds, truth)
    assert rep["M1_norm"] == np.linalg.norm(M1, 2)
    assert rep["M2_norm"] == np.linalg.norm(M2, 2)
    np.testing.assert_array_equal(read_observations(obs).values, ds.values)
    np.testing.assert_array_equal(read_truth(f"{obs}.truth.json").matrix, truth.matrix)


def test_optimal_rule_small_n_warns(tmp_path):
    obs = tmp_path / "obs.txt"
    run("generate", "--dims", 30, 30, "--rank", 2, "--sigma", 1, "--a", 1, "--n", 400, "--out", obs)
    assert run("fit", "--data", obs, "--pi", f"{obs}.pi", "--lambda-mode", "optimal", "--out",
               tmp_path / "fit.json") == 0
    out = json.loads((tmp_path / "fit.json").read_text())
    assert out["warnings"] and "optimal lambda rule" in out["warnings"][0]


def test_nonconvergence_exit_2(tmp_path):
    obs = tmp_path / "obs.txt"
    run("generate", "--dims", 6, 6, "--rank", 2, "--sigma", 1, "--a", 1, "--n", 300,
        "--pi", "powerlaw:1,1,0.1", "--out", obs)
    code = run("fit", "--data", obs, "--pi", f"{obs}.pi", "--lambda-mode", "explicit", "--lambda", 0.001,
               "--max-iterations", 1, "--out", tmp_path / "fit.json")
    assert code == 2
    assert json.loads((tmp_path / "fit.json").read_text())["converged"] is False


@pytest.mark.parametrize(
    "argv",
    [
        ["fit", "--bogus"],
        ["nosuch"],
        ["fit", "--data", "/nonexistent", "--pi", "/nonexistent", "--lambda-mode", "optimal", "--out", "x"],
        ["generate", "--dims", 0, 3, "--rank", 1, "--sigma", 1, "--a", 1, "--n", 5, "--out", "x"],
        ["lowerbound", "--dims", 4, 8, "--rank", 2, "--gamma", 0.1, "--n", 64, "--out", "x"],
    ],
)
def test_validation_errors_exit_1(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(*argv) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error:")


def test_malformed_pi_file(generated, tmp_path, capsys):
    bad = tmp_path / "bad.pi"
    bad.write_text("# 10 10 100\n" + "".join(f"{j} {k} 0.02\n" for j in range(10) for k in range(10)))
    assert run("fit", "--data", generated, "--pi", bad, "--lambda-mode", "optimal", "--out", tmp_path / "f") == 1
    assert "sum" in capsys.readouterr().err


def test_calibrated_needs_C(generated, tmp_path):
    assert run("fit", "--data", generated, "--pi", f"{generated}.pi", "--lambda-mode", "calibrated",
               "--out", tmp_path / "f.json") == 1


def test_lowerbound_manifest(tmp_path):
    assert run("lowerbound", "--dims", 8, 8, "--rank", 2, "--gamma", 0.1, "--sigma", 1, "--a", 1, "--n", 64,
               "--out", tmp_path / "lb") == 0
    manifest = json.loads((tmp_path / "lb" / "manifest.json").read_text())
    assert manifest["cardinality"] >= 5
    assert manifest["conditions"]["all_pass"]
    assert manifest["config"]["seed"] == 0


def test_sweep_and_calibrate_outputs(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"m1": 8, "m2": 8, "n": 500, "rule": "optimal", "calibration_trials": 40}))
    assert run("calibrate", "--config", cfg, "--trials", 40, "--out", tmp_path / "cal.json") == 0
    cal = json.loads((tmp_path / "cal.json").read_text())
    assert cal["C"] > 0 and cal["seed"] == 0
    assert run("sweep", "--axis", "n", "--grid", 300, 600, 1200, "--config", cfg, "--out", tmp_path / "sw.json") == 0
    sw = json.loads((tmp_path / "sw.json").read_text())
    assert sw["config"]["params"]["m1"] == 8 and sw["seed"] == 0
    assert (tmp_path / "sw.json.csv").read_text().startswith("# columns:")
    assert (tmp_path / "sw.json.timing.log").exists()


def test_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"m1": 8, "oops": 1}')
    assert run("calibrate", "--config", cfg, "--out", tmp_path / "c.json") == 1
    cfg.write_text("[1, 2")
    assert run("calibrate", "--config", cfg, "--out", tmp_path / "c.json") == 1
