import pytest

from adialab.config import DEFAULTS, load_config, parse_config
from adialab.errors import ConfigError
from adialab.models import Bigrade


def test_bare_model_block_uses_defaults():
    cfg = parse_config("model:\n  spans: [[1, 0]]\n")
    assert cfg.model_type == "flat" and cfg.model_spec["n"] == 2 and cfg.model_spec["p"] == 1
    assert cfg.h_schedule == DEFAULTS["h_schedule"]
    assert cfg.lambda_grid == DEFAULTS["lambda_grid"]
    assert cfg.grade == Bigrade(0, 0) and cfg.seed == 0
    assert cfg.build_model().leaf_lattice == ((1, 0),)


def test_geometric_schedule_and_linspace():
    cfg = parse_config("model: {slope: '1/2'}\n"
                       "h_schedule: {h0: 0.4, factor: 0.5, count: 3}\n"
                       "lambda_grid: {start: 0, stop: 10, num: 3}\n")
    assert cfg.h_schedule == [0.4, 0.2, 0.1]
    assert cfg.lambda_grid == [0.0, 5.0, 10.0]
    assert cfg.model_spec["spans"] == [[1, "1/2"]]


def test_fibered_block():
    cfg = parse_config("model:\n  type: fibered\n  Nx: 8\n  Ny: 8\n  a: 1\n  b: '1+y'\n")
    assert cfg.model_spec == {"type": "fibered", "name": "fibered", "Nx": 8, "Ny": 8,
                              "a": "1", "b": "1+y"}


@pytest.mark.parametrize("text,field,line", [
    ("model:\n  spans: [[1, 0]]\nh_schedule: [1.0, 0]\n", "h_schedule[1]", 3),
    ("model:\n  spans: [[1, 0]]\nh_schedule: [0.1, 0.2]\n", "h_schedule[1]", 3),
    ("model:\n  spans: [[1, 0]]\n\nh_schedule:\n  - 0.5\n  - 1.5\n", "h_schedule[1]", 6),
    ("model:\n  spans: [[1, 0]]\nlambda_grid: [1, .inf]\n", "lambda_grid[1]", 3),
    ("model:\n  spans: [[1, 0]]\nlambda_grid: [5, 1]\n", "lambda_grid[1]", 3),
    ("model:\n  spans: [[1, 0]]\ngrade: [2, 0]\n", "grade", 3),
    ("model:\n  type: torus\n", "model.type", 2),
    ("model:\n  spans: [[1, 0]]\n  Nx: 3\n", "model.Nx", 3),
    ("model:\n  type: fibered\n  a: 1\n", "model.b", 1),
    ("model:\n  type: fibered\n  a: 1\n  b: 1\ngrade: [0, 1]\n", "grade", 5),
    ("model:\n  spans: [[1, 0]]\nheat:\n  t: [0.5, -1]\n", "heat.t[1]", 4),
    ("model:\n  spans: [[1, 0]]\nfunction:\n  family: bump\n  alpha: 2\n", "function.beta", 3),
    ("model:\n  spans: [[1, 0]]\nspectra: {}\n", "spectra", 3),
    ("model:\n  spans: [[1, 0]]\nseed: -4\n", "seed", 3),
    ("h_schedule: [0.1]\n", "model", 1),
])
def test_validation_names_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert info.value.line == line
    assert field in str(info.value)


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config("model:\n  spans: [[1, 0]\n")
    assert info.value.line is not None


def test_overrides_and_hash(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("model:\n  spans: [[1, 0]]\n")
    cfg = load_config(p)
    moved = cfg.with_overrides(output_dir=tmp_path / "elsewhere")
    assert moved.output_dir == str(tmp_path / "elsewhere")
    assert moved.hash == cfg.hash
    reseeded = cfg.with_overrides(seed=7)
    assert reseeded.seed == 7 and reseeded.hash != cfg.hash


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
