import json

import numpy as np
import pytest

from msmetr.cli import main
from msmetr.io import load_dataset, read_draws, read_table


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--setting", "s2ms", "--T", "60", "--seed", "3", "--out", str(d), "-q"]) == 0
    return d


def _fit(data, out, *extra):
    return main(["fit", "--data", str(data), "--out", str(out), "--D", "2", "--iterations", "30",
                 "--burn-in", "10", "--thin", "2", "--pilot-chains", "2", "--pilot-iterations", "5",
                 "--seed", "1", *extra])


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_flag_and_missing_input(capsys, tmp_path):
    assert main(["fit", "--bogus"]) == 2
    assert main(["fit", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--setting", "nope"]) == 2
    assert main(["fit", "--data", str(tmp_path / "missing"), "--out", str(tmp_path), "-q"]) == 1


def test_simulate_writes_dataset(sim_dir):
    data = load_dataset(sim_dir)
    assert data.T == 60 and data.shape(0) == (12, 12)
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert truth["setting"] == "s2ms" and len(truth["path"]) == 60


def test_fit_outputs_and_determinism(sim_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _fit(sim_dir, a, "-q") == 0
    assert _fit(sim_dir, b, "-q") == 0
    for name in ("summary.csv", "posterior_summary.csv", "trace.csv", "smoothed.csv", "draws.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    dr = read_draws(a)
    assert dr.n_draws == 10 and dr.mu.shape == (10, 1, 2)
    header, rows = read_table(a / "summary.csv")
    vals = {r[0]: r[1] for r in rows}
    assert header == ["quantity", "value"] and "coef_mse" in vals and "state_hit_rate" in vals
    for name in ("acf.csv", "scatter.csv", "ellipse.csv", "outcome_trace.csv"):
        read_table(a / name)


def test_elicitation_logged(sim_dir, tmp_path, capsys):
    assert _fit(sim_dir, tmp_path, "--elicit", "V=1", "AV=0.1", "--iterations", "12") == 0
    err = capsys.readouterr().err
    assert "elicited b_tau=" in err and "V=1 AV=0.1" in err
    assert main(["fit", "--data", str(sim_dir), "--out", str(tmp_path), "--elicit", "V=1", "X=2"]) == 2


def test_config_file_sets_defaults(sim_dir, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[fit]\nD = 1\niterations = 12\nburn_in = 10\nthin = 1\npilot_chains = 1\n")
    out = tmp_path / "o"
    assert main(["fit", "--config", str(cfg), "--data", str(sim_dir), "--out", str(out), "-q"]) == 0
    dr = read_draws(out)
    assert dr.n_draws == 2 and dr.zeta.shape[-1] == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[fit]\nnot_a_flag = 3\n")
    assert main(["fit", "--config", str(bad), "--data", str(sim_dir)]) == 2


def test_holdout_forecast_diagnose(sim_dir, tmp_path):
    fit_dir = tmp_path / "fit"
    assert _fit(sim_dir, fit_dir, "--holdout", "10", "-q") == 0
    assert read_draws(fit_dir).smoothed.shape[0] == 50
    assert main(["forecast", "--data", str(sim_dir), "--draws", str(fit_dir), "--out", str(tmp_path),
                 "--lasso-lambda", "1.0", "-q"]) == 0
    header, rows = read_table(tmp_path / "forecast_report.csv")
    assert [r[0] for r in rows] == ["MSMETR", "OLS", "LASSO"]
    assert header[3:] == ["h1_mse", "h1_mae", "h5_mse", "h5_mae"]
    assert all(np.isfinite(r[1]) for r in rows)
    diag = tmp_path / "diag"
    assert main(["diagnose", "--draws", str(fit_dir), "--data", str(sim_dir), "--out", str(diag), "-q"]) == 0
    assert (diag / "summary.json").exists()
    assert main(["forecast", "--data", str(sim_dir), "--draws", str(fit_dir), "--test", "3", "-q"]) == 2


def test_baseline_report(sim_dir, tmp_path):
    assert main(["baseline", "--data", str(sim_dir), "--test", "10", "--out", str(tmp_path),
                 "--lasso-lambda", "0.5", "-q"]) == 0
    _, rows = read_table(tmp_path / "baseline_report.csv")
    assert [r[0] for r in rows] == ["OLS", "LASSO"]
    assert main(["baseline", "--data", str(sim_dir), "--test", "60", "-q"]) == 2


def test_output_directory_from_environment(sim_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("MSMETR_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["baseline", "--data", str(sim_dir), "--lasso-lambda", "0.5", "-q"]) == 0
    assert (tmp_path / "env" / "baseline_report.csv").exists()
