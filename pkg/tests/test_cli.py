import json

import pytest

from dadmms.cli import build_parser, main

SMALL = """
[problem]
n_per_agent = 10

[algorithm]
name = "dadmms"
rho = 5.0
"""


@pytest.fixture(autouse=True)
def _no_worker_env(monkeypatch):
    monkeypatch.delenv("DADMMS_WORKERS", raising=False)


def test_theory_json(write_toml, capsys):
    path = write_toml("[theory]\nm_f = 2.0\ntau_f = 1.0\n")
    assert main(["theory", str(path), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["tau_g"] == pytest.approx(1.70, abs=0.01)
    assert data["tau_f_threshold"] == pytest.approx(1.236, abs=1e-3)


def test_theory_text_from_dataset(write_toml, capsys):
    assert main(["theory", str(write_toml(SMALL))]) == 0
    assert capsys.readouterr().out.startswith("topology: ring_cyclic (N=5)")


def test_theory_latex(write_toml, capsys):
    assert main(["theory", str(write_toml("[theory]\nm_f = 2.0\ntau_f = 1.0\n")), "--latex"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("\\begin{tabular}{lr}")
    assert "L_- = " in out


def test_theory_formats_are_exclusive():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["theory", "x.toml", "--json", "--latex"])


def test_run_with_overrides(write_toml, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = main(["run", str(write_toml(SMALL)), "--trials", "3", "--iters", "3", "--out", str(out_dir)])
    assert code == 0
    assert (out_dir / "series.csv").exists()
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    assert len(manifest["trial_seeds"]) == 3
    out = capsys.readouterr().out
    assert "w2[avg]" in out
    assert f"results written to {out_dir}" in out


def test_sweep(write_toml, tmp_path, capsys):
    path = write_toml(SMALL)
    args = ["sweep", str(path), "--trials", "2", "--iters", "2", "--out", str(tmp_path / "s")]
    assert main(args + ["--rho", "1", "2"]) == 0
    assert "rho=1/w2[avg]" in capsys.readouterr().out
    assert main(args) == 2
    assert "sweep.rho" in capsys.readouterr().err


def test_invalid_config_exits_with_two(write_toml, capsys):
    assert main(["run", str(write_toml("[problem]\nkind = 'probit'\n"))]) == 2
    assert capsys.readouterr().err.startswith("error: problem.kind")


def test_missing_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2
    assert "file not found" in capsys.readouterr().err


def test_selftest_suite(capsys):
    assert main(["selftest", "--suite", "graph"]) == 0
    assert capsys.readouterr().out.rstrip().endswith("0 failed")


def test_verify_lemma1_and_kkt(write_toml, capsys):
    path = str(write_toml(SMALL))
    assert main(["verify", "lemma1", path, "--iters", "20"]) == 0
    assert main(["verify", "kkt", path]) == 0
    out = capsys.readouterr().out
    assert "max |X_alg - X_recursion|" in out
    assert "stationarity" in out


def test_verify_bound_needs_linreg(write_toml, capsys):
    path = write_toml('[problem]\nkind = "logreg"\n\n[algorithm]\nrho = 5.0\n')
    assert main(["verify", "bound", str(path), "--iters", "2", "--trials", "2"]) == 2
    assert "problem.kind" in capsys.readouterr().err
