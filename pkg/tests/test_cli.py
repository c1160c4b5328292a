from __future__ import annotations

import csv
import json
import shutil
import subprocess

import numpy as np
import pytest
from scipy import stats

from exqr.cli import main
from exqr.harness import write_dataset
from exqr.qr_core import Dataset


def cfg_file(tmp_path, **over):
    cfg = {
        "generator": {
            "kind": "LocationShift",
            "beta": [1.0, 1.0],
            "error_model": {"name": "Cauchy"},
            "covariate_model": "UniformCube",
            "T": 200,
            "d": 2,
        },
        "tau": 0.05,
        "R": 20,
        "seed": 1,
    }
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_fit_median(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("y\n3.0\n-1.0\n7.0\n")
    out = tmp_path / "fit.json"
    assert main(["fit", "--tau", "0.5", "--data", str(data), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["beta_hat"] == [3.0]


def test_fit_stdout(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("y,x1\n0,0\n1,1\n")
    assert main(["fit", "--tau", "0.3", "--data", str(data)]) == 0
    np.testing.assert_allclose(json.loads(capsys.readouterr().out)["beta_hat"], [0.0, 1.0], atol=1e-14)


def test_limit_sim_cauchy_closed_form(tmp_path):
    out = tmp_path / "lim.csv"
    rc = main(["limit-sim", "--model", "Cauchy", "--k", "0.5", "--reps", "20000", "--seed", "7", "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 20000
    z = np.array([float(r["z1"]) for r in rows])
    # argmin is -1/Gamma_1, so P(Z <= z) = 1 - exp(1/z) for z < 0
    assert stats.kstest(z, lambda v: np.where(v < 0, -np.expm1(1.0 / np.minimum(v, -1e-300)), 1.0)).pvalue > 1e-3


def test_limit_sim_config(tmp_path):
    out = tmp_path / "lim.csv"
    assert main(["limit-sim", "--config", str(cfg_file(tmp_path)), "--reps", "10", "--out", str(out)]) == 0
    header = next(csv.reader(open(out)))
    assert header == ["rep", "k", "z1", "z2", "zc1", "zc2", "unique", "M_used"]


def test_tail_index(tmp_path):
    rng = np.random.default_rng(0)
    w = rng.random(3000)
    data = Dataset.from_covariates(1.0 + w + (1.0 + w) * rng.standard_cauchy(3000), w)
    path = tmp_path / "d.csv"
    write_dataset(path, data)
    out = tmp_path / "t.json"
    rc = main(["tail-index", "--data", str(path), "--tau", "0.03", "--point", "0", "--point", "1", "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert len(rep["c_hat"]) == 2 and rep["c_hat"][0]["x"] == [1.0, 0.0]
    assert rep["ci"][0] < rep["xi_hat"] < rep["ci"][1]


def test_mc_qq(tmp_path):
    out = tmp_path / "qq.csv"
    assert main(["mc-qq", "--config", str(cfg_file(tmp_path)), "--reps", "15", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["coef", "prob", "finite_sample", "extreme", "central"]
    assert len(rows) == 1 + 2 * 99


def test_mc_qq_output_path_from_config(tmp_path):
    out = tmp_path / "from_cfg.csv"
    assert main(["mc-qq", "--config", str(cfg_file(tmp_path, output_path=str(out)))]) == 0
    assert out.exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["fit", "--bogus"],
        ["nonsense"],
        ["mc-qq"],
        ["fit", "--tau", "0.5", "--data", "/nonexistent/file.csv"],
        ["limit-sim", "--k", "1.0", "--out", "x.csv"],
    ],
)
def test_exit_two(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.strip()


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"generator": {}, "whatever": 1}))
    assert main(["mc-qq", "--config", str(bad), "--out", str(tmp_path / "o.csv")]) == 2
    assert "config error" in capsys.readouterr().err


def test_domain_error_exit_one(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("y\n1\n2\n3\n")
    assert main(["fit", "--tau", "1.5", "--data", str(data)]) == 1
    assert "DomainError" in capsys.readouterr().err


def test_degenerate_spacing_exit_one(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("y\n" + "\n".join(["1.0"] * 800) + "\n")
    assert main(["tail-index", "--data", str(data), "--tau", "0.05"]) == 1


@pytest.mark.skipif(shutil.which("exqr") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["exqr", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "limit-sim" in res.stdout
