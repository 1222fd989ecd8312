import json
import re
import shutil
from pathlib import Path

import pytest

from adialab.cli import main
from adialab.io import read_csv
from adialab.models import FUNCTIONS
from adialab.spectra import count_modes

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def header(path):
    meta = {}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            break
        k, v = line[1:].strip().split("=", 1)
        meta[k] = v
    return meta


def test_spectrum_minimal(tmp_path, capsys):
    cfg = write(tmp_path, "model:\n  spans: [[1, 0]]\nh_schedule: [1.0]\nspectrum: {lambda_max: 100}\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    csvs = sorted((tmp_path / "o").glob("spectrum_*_h00.csv"))
    assert len(csvs) == 1
    cols, rows = read_csv(csvs[0])
    assert cols == ["eigenvalue", "multiplicity"]
    assert float(rows[0][0]) == 0.0 and int(rows[0][1]) == 1
    meta = header(csvs[0])
    assert {"config_hash", "seed", "tool", "version"} <= set(meta)
    manifest = json.loads(next((tmp_path / "o").glob("spectrum_*.json")).read_text())
    assert manifest["provenance"]["config_hash"] == meta["config_hash"]


def test_spectrum_kronecker_total(tmp_path, kronecker):
    cfg = write(tmp_path, "model: {name: kronecker, slope: 'sqrt(2)'}\nh_schedule: [0.05]\n"
                          "spectrum: {lambda_max: 100}\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(next(tmp_path.glob("spectrum_*_h00.csv")))
    total = sum(int(r[1]) for r in rows)
    assert total == int(count_modes(kronecker, FUNCTIONS, 0.05, [100.0])[0])


def test_invalid_h_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "model:\n  spans: [[1, 0]]\nh_schedule: [1.0, 0]\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "h_schedule[1]" in err and "line 3" in err
    assert not list(tmp_path.glob("*.csv"))


@pytest.mark.parametrize("command", ["sweep", "heat", "branches"])
def test_commands_write_provenance(tmp_path, command):
    src = CONFIGS / "axis.yaml"
    assert main([command, "--config", str(src), "--out", str(tmp_path)]) == 0
    csvs = list(tmp_path.glob(f"{command}_*.csv"))
    assert csvs
    for p in csvs:
        meta = header(p)
        assert meta["tool"] == "adialab" and len(meta["config_hash"]) == 64
    js = json.loads(next(tmp_path.glob(f"{command}_*.json")).read_text())
    assert js["provenance"]["version"] == meta["version"]
    assert "output_dir" not in js["config"]


def test_sweep_columns(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "kronecker.yaml"), "--out", str(tmp_path)]) == 0
    cols, rows = read_csv(next(tmp_path.glob("sweep_*.csv")))
    assert cols[:5] == ["h", "lambda", "N_h", "rhs", "ratio"]
    ratios = [float(r[4]) for r in rows if float(r[0]) == 0.025 and float(r[1]) == 100]
    assert ratios and abs(ratios[0] - 1) <= 0.05


def test_heat_fibered(tmp_path):
    cfg = write(tmp_path, "model:\n  type: fibered\n  Nx: 16\n  Ny: 16\n  a: 1\n  b: 1\n"
                          "h_schedule: [1.0, 0.5]\nheat: {t: [0.5], count: 256}\n")
    assert main(["heat", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    cols, rows = read_csv(next(tmp_path.glob("heat_*.csv")))
    assert "complete" in cols


def test_deterministic_outputs(tmp_path):
    src = CONFIGS / "kronecker.yaml"
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["sweep", "--config", str(src), "--out", str(a)]) == 0
    assert main(["sweep", "--config", str(src), "--out", str(b)]) == 0
    assert main(["sweep", "--config", str(src), "--out", str(c), "--workers", "4"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) == sorted(p.name for p in c.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes() == (c / n).read_bytes()


def test_config_moved_keeps_hash(tmp_path):
    src = CONFIGS / "minimal.yaml"
    moved = tmp_path / "elsewhere.yaml"
    shutil.copy(src, moved)
    assert main(["sweep", "--config", str(src), "--out", str(tmp_path / "x")]) == 0
    assert main(["sweep", "--config", str(moved), "--out", str(tmp_path / "y")]) == 0
    for p in (tmp_path / "x").iterdir():
        assert p.read_bytes() == (tmp_path / "y" / p.name).read_bytes()


def test_verify_rejects_leaf_dependent_b(tmp_path, capsys):
    cfg = write(tmp_path, "model:\n  type: fibered\n  Nx: 16\n  Ny: 16\n  a: 1\n"
                          "  b: '1 + 0.2*cos(2*pi*x)'\n")
    code = main(["verify", "--config", str(cfg), "--skip", *map(str, range(1, 12))])
    out = capsys.readouterr().out
    assert code == 12
    assert "bundle-like" in out and "FAIL 12" in out


def test_verify_insufficient_data(tmp_path, capsys):
    cfg = write(tmp_path, "model: {slope: 'sqrt(2)'}\nh_schedule: [0.1, 0.05]\nlambda_grid: [50]\n")
    code = main(["verify", "--config", str(cfg), "--skip", *map(str, range(1, 12))])
    out = capsys.readouterr().out
    assert code == 14
    assert "InsufficientData" in out


def test_verify_config_checks_pass(tmp_path, capsys):
    code = main(["verify", "--config", str(CONFIGS / "verify.yaml"),
                 "--skip", *map(str, range(1, 12))])
    out = capsys.readouterr().out
    assert code == 0, out
    assert out.count("PASS") == 4


def test_verify_runs_selected_criteria(capsys):
    keep = {6, 10}
    skip = [str(i) for i in range(1, 12) if i not in keep]
    code = main(["verify", "--config", str(CONFIGS / "verify.yaml"), "--skip", *skip])
    out = capsys.readouterr().out
    assert code == 0, out
    assert re.search(r"PASS\s+6 ", out) and re.search(r"PASS\s+10 ", out)


def test_bad_workers(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "minimal.yaml"), "--workers", "0"]) == 2


def test_missing_config(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "nope.yaml")]) == 2
