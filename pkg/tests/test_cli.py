import json

import pytest

from cfwd.cli import main, resolve_threads
from cfwd.config import ConfigError, load_xi_file, parse_config, parse_xi
from cfwd.io import csv_text, dumps, read_csv

SIM = """mode: simulate
seed: 3
simulate:
  n: 4
  dt: 1e-3
  T: 0.05
  record_every: 5
"""

VERIFY = """seed: 1
verify:
  suites: [martingale]
  martingale:
    n: 4
    dt: 1e-3
    T: 0.1
    paths: 100
    chunk: 50
    refine: false
    com_tolerance: 0.1
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def artifacts(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.json"}


def test_simulate_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "sim.yaml", SIM)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a, b = artifacts(tmp_path / "a"), artifacts(tmp_path / "b")
    assert a == b
    assert {"trajectory.csv", "partitions.csv", "measures.jsonl", "manifest.json"} <= set(a)
    header, rows = read_csv(tmp_path / "a" / "trajectory.csv")
    assert header == ["t", "x1", "x2", "x3", "x4", "atom_count", "com"] and len(rows) == 11
    man = json.loads(a["manifest.json"])
    assert man["seed"] == 3 and man["resolved_config"]["simulate"]["merge_tol"] is None
    assert main(["simulate", "--config", cfg, "--seed", "4", "--out", str(tmp_path / "c")]) == 0
    assert artifacts(tmp_path / "c")["trajectory.csv"] != a["trajectory.csv"]


def test_figures_scripts(tmp_path):
    cfg = write(tmp_path, "sim.yaml", SIM)
    out = tmp_path / "s"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--plot"]) == 0
    assert (out / "plot_atoms.py").exists() and (out / "plot_partitions.py").exists()
    assert main(["figures", str(tmp_path / "missing")]) == 3


def test_verify_martingale_report(tmp_path, capsys):
    cfg = write(tmp_path, "v.yaml", VERIFY)
    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "v")])
    rep = json.loads((tmp_path / "v" / "report.json").read_text())
    assert code == (0 if rep["passed"] else 4)
    names = [r["name"] for r in rep["suites"]["martingale"]]
    assert any("sin_bump" in n for n in names) and any("centre-of-mass" in n for n in names)
    assert all(r["count"] == 100 for r in rep["suites"]["martingale"] if r["kind"] == "z")
    assert "PASS" in capsys.readouterr().out


def test_sample_xi_to_stdout(capsys):
    assert main(["sample-xi", "--n", "2", "--radius", "1", "--samples", "5", "--out", "-"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5
    rec = json.loads(lines[0])
    assert rec["weight"] == 1.0 and len(rec["x"]) == 2 and len(rec["q"]) == 1


def test_config_errors_carry_line_numbers(tmp_path, capsys):
    bad = write(tmp_path, "bad.yaml", "seed: 1\nsimulate:\n  n: 4\n  colour: red\n")
    assert main(["simulate", "--config", bad]) == 2
    assert "bad.yaml:4:" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 3
    wrong = write(tmp_path, "w.yaml", "simulate:\n  dt: fast\n")
    assert main(["simulate", "--config", wrong]) == 2
    assert main(["run", "--config", write(tmp_path, "e.yaml", "seed: 1\n")]) == 2
    assert main(["verify", "--config", write(tmp_path, "s.yaml", "verify:\n  suites: [nope]\n")]) == 2


def test_config_defaults_and_xi_specs(tmp_path):
    cfg = parse_config("simulate:\n  dt: 1e-4\n")
    assert cfg.section("simulate")["dt"] == 1e-4
    assert cfg.section("verify", "martingale")["paths"] == 10_000
    assert parse_xi(2.0).values.tolist() == [2.0]
    xf = write(tmp_path, "xi.json", json.dumps({"breakpoints": [0.5], "values": [0.0, 1.0]}))
    assert load_xi_file(xf).breakpoints.tolist() == [0.5]
    assert parse_xi({"file": xf}).values.tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        parse_xi("nonsense")
    with pytest.raises(ConfigError):
        parse_config("seed: -1\n")


def test_thread_precedence(monkeypatch):
    cfg = parse_config("threads: 3\n")
    monkeypatch.delenv("CFWD_THREADS", raising=False)
    assert resolve_threads(None, cfg) == 3
    monkeypatch.setenv("CFWD_THREADS", "2")
    assert resolve_threads(None, cfg) == 2
    assert resolve_threads(5, cfg) == 5
    with pytest.raises(ConfigError):
        resolve_threads(0, cfg)


def test_io_formats():
    text = csv_text(["a", "b"], [[1, 0.1], [2, 1e-300]])
    assert text.splitlines() == ["# format_version: 1", "a,b", "1,0.1", "2,1e-300"]
    assert dumps({"b": float("nan"), "a": 1}, indent=None) == '{"a": 1, "b": "nan"}'


def test_run_dispatches_sample_xi(tmp_path):
    cfg = write(tmp_path, "x.yaml", "mode: sample-xi\nseed: 2\nsample_xi:\n  n: 2\n  samples: 20\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "x")]) == 0
    assert len((tmp_path / "x" / "samples.jsonl").read_text().splitlines()) == 20
