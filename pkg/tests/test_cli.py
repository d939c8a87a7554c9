import subprocess
import sys
from pathlib import Path

import pytest

from levylab.cli import EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_OK, main
from levylab.config import ConfigError, parse_config
from levylab.report import read_csv

ATOMS = """
seed = 3
[measure]
type = "atoms"
points = [[0.8, 0.0], [0.0, 0.3]]
masses = [1.0, 1.0]
[normalizer]
family = "powloglog"
gamma = 1.0
"""

SIM = ATOMS + """
[simulate]
n_min = 4
n_max = 20
replications = 50
"""


def _write(tmp_path: Path, text: str, name="run.toml") -> Path:
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _run(tmp_path, text, command, *extra):
    cfg = _write(tmp_path, text)
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def test_malformed_config_lists_every_error(tmp_path, capsys):
    bad = """
[measure]
type = "atoms"
points = [[1.5, 0.0]]
masses = [-1.0]
[normalizer]
family = "powloglog"
[simulate]
r = 1.5
"""
    code, _ = _run(tmp_path, bad, "analyze")
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    for key in ("measure.masses.0", "simulate.r", "normalizer.gamma"):
        assert key in err


def test_sigma_one_required():
    text = ATOMS + """
[construct]
directions = [[1.0, 0.0]]
sigmas = [0.5]
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any("construct.sigmas.0" in e for e in exc.value.errors)


def test_non_unit_direction_rejected():
    text = ATOMS + """
[construct]
directions = [[1.0, 1.0]]
sigmas = [1.0]
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any("unit vector" in e for e in exc.value.errors)


def test_toml_syntax_error(tmp_path):
    code, _ = _run(tmp_path, "[measure\n", "analyze")
    assert code == EXIT_CONFIG


def test_missing_config(tmp_path):
    assert main(["analyze"]) == EXIT_CONFIG


def test_randomized_command_needs_seed(tmp_path):
    code, _ = _run(tmp_path, SIM.replace("seed = 3\n", ""), "simulate")
    assert code == EXIT_CONFIG


def test_simulate_byte_identical(tmp_path):
    a, out_a = _run(tmp_path, SIM, "simulate")
    first = {p.name: p.read_bytes() for p in out_a.glob("*.csv")}
    b, out_b = _run(tmp_path, SIM, "simulate", "--threads", "2")
    second = {p.name: p.read_bytes() for p in out_b.glob("*.csv")}
    assert a == b == EXIT_OK
    assert first == second and "paths.csv" in first
    manifest = (out_a / "manifest.txt").read_text()
    assert "seed=3" in manifest and "config_hash=" in manifest


def test_seed_override_changes_output(tmp_path):
    _, out = _run(tmp_path, SIM, "simulate")
    first = (out / "paths.csv").read_bytes()
    _, out = _run(tmp_path, SIM, "simulate", "--seed", "4")
    assert (out / "paths.csv").read_bytes() != first


def test_svg_rerender_identical(tmp_path):
    text = SIM.replace("[measure]", '[output]\nformats = ["csv", "svg"]\n[measure]')
    code, out = _run(tmp_path, text, "simulate")
    assert code == EXIT_OK
    svg = out / "limsup.svg"
    paths_svg = out / "paths.svg"
    before = paths_svg.read_bytes()
    paths_svg.unlink()
    assert main(["report", "--out", str(out)]) == EXIT_OK
    assert paths_svg.read_bytes() == before
    assert not svg.exists() or svg.read_text().startswith("<svg")


def test_analyze_runs(tmp_path):
    code, out = _run(tmp_path, ATOMS, "analyze")
    assert code in (EXIT_OK, EXIT_INCONCLUSIVE)
    assert (out / "manifest.txt").exists() and (out / "timing.txt").exists()


def test_alpha0_synthetic_brackets_lambda(tmp_path):
    text = ATOMS + """
[alpha0]
profile = "synthetic"
lam = 1.0
"""
    code, out = _run(tmp_path, text, "alpha0")
    assert code == EXIT_OK
    header, rows = read_csv(out / "alpha0.csv")
    row = dict(zip(header, rows[0]))
    assert float(row["alpha_lo"]) <= 1.0 <= float(row["alpha_hi"])


def test_membership_tiny_budget_inconclusive(tmp_path):
    text = ATOMS + """
[membership]
profile = "synthetic"
lam = 1.0
shape = [[1.0, 0.0], [0.0, 0.5]]
points = [[0.9, 0.1]]
epsilon = 0.01
mc_budget = 2
"""
    code, out = _run(tmp_path, text, "membership")
    assert code == EXIT_INCONCLUSIVE
    header, rows = read_csv(out / "membership.csv")
    assert dict(zip(header, rows[0]))["label"] == "Inconclusive"


def test_membership_dimension_mismatch(tmp_path):
    text = ATOMS + """
[membership]
profile = "measure"
points = [[0.5]]
epsilon = 0.1
"""
    code, _ = _run(tmp_path, text, "membership")
    assert code == EXIT_CONFIG


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "levylab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "levylab" in res.stdout
