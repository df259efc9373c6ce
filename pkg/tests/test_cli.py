from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gamma_mnl import cli
from gamma_mnl.cli import RunManifest, main, read_draws, write_draws

FAST = ["--iters", "300", "--burn", "200", "--tune-window", "50"]


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--N", "80", "--P", "2", "--C", "3", "--seed", "4", "--out", str(out)]) == 0
    return out


def test_simulate_outputs(sim):
    rows = list(csv.reader((sim / "data.csv").open()))
    assert rows[0] == ["x1", "x2", "y1", "y2", "y3"]
    assert len(rows) == 81
    truth = cli.read_truth(sim / "truth.csv")
    ref = cli.read_truth(sim / "truth_reference.csv")
    assert truth.shape == (3, 3)
    np.testing.assert_allclose(ref, truth - truth[:, -1:])
    m = RunManifest.from_json((sim / "manifest.json").read_text())
    assert m.command == "simulate" and m.seed == 4 and m.dgp["N"] == 80


def test_fit_writes_draws_and_manifest(sim, tmp_path, capsys):
    out = tmp_path / "fit"
    code = main(["fit", "--data", str(sim / "data.csv"), "--seed", "9", "--out", str(out)])
    assert code == 0
    draws = read_draws(out / "draws.csv")
    assert draws.shape == (1000, 3, 3)
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 9 and m["sampler"]["n_iter"] == 3000
    summary = json.loads((out / "summary.json").read_text())
    assert summary["chain"]["n_draws"] == 1000
    assert "median ESS" in capsys.readouterr().out


def test_manifest_seed_reproduces_draws(sim, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["fit", "--data", str(sim / "data.csv"), "--seed", "21", "--out", str(a), *FAST])
    m = RunManifest.from_json((a / "manifest.json").read_text())
    main(["fit", "--data", str(sim / "data.csv"), "--seed", str(m.seed), "--out", str(b), *FAST])
    assert (a / "draws.csv").read_text() == (b / "draws.csv").read_text()


def test_npy_draws_round_trip(sim, tmp_path):
    out = tmp_path / "fit"
    main(["fit", "--data", str(sim / "data.csv"), "--format", "npy", "--out", str(out), *FAST])
    d = read_draws(out / "draws.npy")
    assert d.shape == (100, 3, 3)
    write_draws(d, tmp_path / "d.csv")
    np.testing.assert_array_equal(read_draws(tmp_path / "d.csv"), d)


def test_report_coverage_table(sim, tmp_path, capsys):
    out = tmp_path / "fit"
    main(["fit", "--data", str(sim / "data.csv"), "--reference-constrained", "--prior-cov", "4", "--out", str(out)])
    capsys.readouterr()
    code = main(["report", "--draws", str(out / "draws.csv"), "--truth", str(sim / "truth.csv"), "--label", "DA+MH"])
    assert code == 0
    text = capsys.readouterr().out
    lines = text.splitlines()
    head = next(i for i, l in enumerate(lines) if l.startswith("Sampler:"))
    assert len(lines[head].split()) == 6  # label column plus five levels
    assert lines[head + 1].split()[0] == "DA+MH"
    assert "coverage over 6 estimated parameters" in text
    assert "ESR" not in text
    main(["report", "--draws", str(out / "draws.csv"), "--truth", str(sim / "truth.csv"), "--json"])
    d = json.loads(capsys.readouterr().out)
    assert d["intervals"]["n_estimated"] == 6
    assert set(d["intervals"]["coverage"]) == {"0.99", "0.95", "0.9", "0.75", "0.5"}


def test_unsupported_configuration_exit_code(sim, tmp_path):
    code = main(["fit", "--data", str(sim / "data.csv"), "--sampler", "da-ess", "--prior", "flat", "--out", str(tmp_path / "x")])
    assert code == 3


def test_usage_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--iters", "many"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    assert main(["fit"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 3\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "s")]) == 1


def test_input_error_exit_codes(tmp_path, capsys):
    f = tmp_path / "draws.csv"
    f.write_text("beta_1_0,beta_2_0\n0.1,abc\n")
    assert main(["report", "--draws", str(f)]) == 2
    f.write_text("alpha,beta\n1,2\n")
    assert main(["report", "--draws", str(f)]) == 2
    short = tmp_path / "short.csv"
    write_draws(np.zeros((10, 1, 2)), short)
    assert main(["report", "--draws", str(short)]) == 2
    assert main(["fit", "--data", str(tmp_path / "missing.csv")]) == 2
    data = tmp_path / "d.csv"
    data.write_text("x1,y\n0.5,1\nabc,2\n")
    assert main(["fit", "--data", str(data)]) == 2
    assert "row 3" in capsys.readouterr().err


def test_config_precedence(sim, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\niters = 250\nburn = 150\ntune-window = 50\nseed = 3\n")
    out = tmp_path / "fit"
    assert main(["fit", "--config", str(cfg), "--data", str(sim / "data.csv"), "--seed", "8", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["sampler"]["n_iter"] == 250
    assert m["seed"] == 8
    js = tmp_path / "run.json"
    js.write_text(json.dumps({"iters": 220, "burn": 120, "tune_window": 60}))
    out2 = tmp_path / "fit2"
    assert main(["fit", "--config", str(js), "--data", str(sim / "data.csv"), "--out", str(out2)]) == 0
    assert read_draws(out2 / "draws.csv").shape[0] == 100


def test_prior_specifications(tmp_path):
    s = dict(cli.DEFAULTS)
    s.update(prior="normal", prior_mean="0,1", prior_cov="2,3")
    p = cli.build_prior(s, 2)
    np.testing.assert_array_equal(p.cov, np.diag([2.0, 3.0]))
    np.testing.assert_array_equal(p.mean, [0.0, 1.0])
    f = tmp_path / "cov.csv"
    f.write_text("2,0.5\n0.5,1\n")
    s.update(prior_cov=str(f), prior_mean="0")
    np.testing.assert_array_equal(cli.build_prior(s, 2).cov, [[2, 0.5], [0.5, 1]])
    s.update(prior_cov="1,2,3")
    with pytest.raises(cli.UsageError):
        cli.build_prior(s, 2)


def test_manifest_round_trip():
    m = RunManifest(command="fit", seed=5, sampler={"n_iter": 10}, artifacts={"draws": "d.csv"})
    assert RunManifest.from_json(m.to_json()) == m


def test_benchmark_smoke(tmp_path, capsys):
    out = tmp_path / "bench"
    argv = ["benchmark", "--profile", "smoke", "--N", "40", "--samplers", "da-mh,da-ess,naive-mh", "--out", str(out), *FAST]
    assert main(argv) == 0
    rows = list(csv.DictReader((out / "benchmark.csv").open()))
    assert len(rows) == 6
    assert {r["sampler"] for r in rows} == {"da-mh", "da-ess", "naive-mh"}
    assert all(r["status"] == "ok" for r in rows)
    assert (out / "benchmark_plot.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["command"] == "benchmark"
    assert "esr=" in capsys.readouterr().out


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "gamma_mnl.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.strip() == cli.__version__
