"""YAML experiment configuration.

Every numerical knob has a default, so a file holding only a ``model``
block is a valid config.  Validation errors name the offending field and
its line in the source file.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import AdialabError, ConfigError
from .io import config_hash
from .models import Bigrade, FUNCTIONS, build_fibered_model, build_flat_model
from .spectra import Gaussian, RaisedCosineBump, SmoothedIndicator

DEFAULTS: dict = {
    "grade": [0, 0],
    "h_schedule": [0.2, 0.1, 0.05, 0.025],
    "lambda_grid": [10.0, 50.0, 100.0],
    "spectrum": {"lambda_max": 100.0, "count": 20},
    "heat": {"t": [0.5], "lambda_max": None, "count": 200},
    "function": {"family": "gaussian", "t": 0.5},
    "branches": {"count": 6, "exclude_leaf_harmonic": False, "max_window": 400},
    "budget": 100_000_000,
    "max_eigs": 400,
    "tolerances": {"residual": 1e-8},
    "verify": {"scale": "reduced", "skip": []},
    "output_dir": "out",
    "seed": 0,
}

_TOP_KEYS = set(DEFAULTS) | {"model"}
_FLAT_KEYS = {"type", "name", "n", "p", "spans", "slope", "search_box", "denominator_bound"}
_FIBERED_KEYS = {"type", "name", "Nx", "Ny", "a", "b"}


def _line_map(text: str) -> dict:
    """Map key paths (tuples) to 1-based source lines."""
    out: dict = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                out[path + (k.value,)] = k.start_mark.line + 1
                walk(v, path + (k.value,))
                out[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


class _Checker:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: tuple, msg: str):
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in self.lines:
                line = self.lines[path[:cut]]
                break
        name = ""
        for part in path:
            name += f"[{part}]" if isinstance(part, int) else (f".{part}" if name else part)
        raise ConfigError(msg, field=name or None, line=line)

    def number(self, value, path, *, lo=-math.inf, hi=math.inf, lo_open=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            self.fail(path, "value must be finite")
        if v < lo or (lo_open and v == lo) or v > hi:
            left = "(" if lo_open else "["
            self.fail(path, f"value {v:g} outside {left}{lo:g}, {hi:g}]")
        return v

    def integer(self, value, path, *, lo=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if lo is not None and value < lo:
            self.fail(path, f"must be >= {lo}")
        return int(value)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    model_spec: dict
    grade: Bigrade
    h_schedule: list
    lambda_grid: list
    spectrum: dict
    heat: dict
    function: dict
    branches: dict
    budget: int
    max_eigs: int
    tolerances: dict
    verify: dict
    output_dir: str
    seed: int
    source: Optional[str] = None
    resolved: dict = field(default_factory=dict, repr=False)
    _lines: dict = field(default_factory=dict, repr=False)
    _model: Any = field(default=None, repr=False)

    @property
    def model_type(self) -> str:
        return self.model_spec["type"]

    @property
    def model_id(self) -> str:
        return self.model_spec["name"]

    @property
    def recorded(self) -> dict:
        """Resolved settings written to outputs; the output location is left out."""
        return {k: v for k, v in self.resolved.items() if k != "output_dir"}

    @property
    def hash(self) -> str:
        return config_hash(self.recorded)

    def build_model(self):
        """Construct (and cache) the model; errors propagate unchanged."""
        if self._model is None:
            m = self.model_spec
            if m["type"] == "flat":
                self._model = build_flat_model(m["n"], m["p"], m["spans"], name=m["name"],
                                               search_box=m["search_box"],
                                               denominator_bound=m["denominator_bound"])
            else:
                self._model = build_fibered_model(m["Nx"], m["Ny"], m["a"], m["b"],
                                                  name=m["name"])
        return self._model

    def test_function(self):
        f = self.function
        family = f["family"]
        if family == "gaussian":
            return Gaussian(f["t"])
        if family == "bump":
            return RaisedCosineBump(f["alpha"], f["beta"])
        return SmoothedIndicator(f["lam"], f["width"])

    def with_overrides(self, *, output_dir=None, seed=None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.resolved)
        if output_dir is not None:
            raw["output_dir"] = str(output_dir)
        if seed is not None:
            raw["seed"] = seed
        return _validate(raw, self._lines, self.source)


def _model_block(m, ck: _Checker) -> dict:
    path = ("model",)
    if not isinstance(m, dict):
        ck.fail(path, "model block must be a mapping")
    kind = m.get("type", "fibered" if "a" in m else "flat")
    if kind not in ("flat", "fibered"):
        ck.fail(path + ("type",), f"unknown model type {kind!r} (flat | fibered)")
    allowed = _FLAT_KEYS if kind == "flat" else _FIBERED_KEYS
    for key in m:
        if key not in allowed:
            ck.fail(path + (key,), f"unknown key for a {kind} model")
    out = {"type": kind, "name": str(m.get("name", kind))}
    if kind == "fibered":
        for key in ("Nx", "Ny"):
            out[key] = ck.integer(m.get(key, 64), path + (key,), lo=3)
        for key in ("a", "b"):
            if key not in m:
                ck.fail(path + (key,), "missing coefficient expression")
            val = m[key]
            if isinstance(val, bool) or not isinstance(val, (str, int, float)):
                ck.fail(path + (key,), "expected an expression string or a number")
            out[key] = str(val)
        return out
    if "spans" in m and "slope" in m:
        ck.fail(path, "give either spans or slope, not both")
    if "slope" in m:
        slope = m["slope"]
        if isinstance(slope, bool) or not isinstance(slope, (str, int, float)):
            ck.fail(path + ("slope",), "expected a number or expression string")
        spans = [[1, slope]]
    elif "spans" in m:
        spans = m["spans"]
        if not isinstance(spans, list) or not spans or not all(isinstance(r, list) for r in spans):
            ck.fail(path + ("spans",), "expected a list of spanning vectors")
    else:
        ck.fail(path, "flat model needs spans or slope")
    for a, row in enumerate(spans):
        for b, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (str, int, float)):
                ck.fail(path + ("spans", a, b), f"bad span entry {v!r}")
    out["spans"] = [list(r) for r in spans]
    out["n"] = ck.integer(m.get("n", len(spans[0])), path + ("n",), lo=2)
    out["p"] = ck.integer(m.get("p", len(spans)), path + ("p",), lo=1)
    if out["p"] != len(spans) or any(len(r) != out["n"] for r in spans):
        ck.fail(path + ("spans",), f"expected {out['p']} vectors of length {out['n']}")
    out["search_box"] = ck.integer(m.get("search_box", 12), path + ("search_box",), lo=1)
    out["denominator_bound"] = ck.integer(m.get("denominator_bound", 10**6),
                                          path + ("denominator_bound",), lo=1)
    return out


def _schedule(val, ck: _Checker) -> list:
    path = ("h_schedule",)
    if isinstance(val, dict):
        for key in val:
            if key not in ("h0", "factor", "count"):
                ck.fail(path + (key,), "unknown key (h0, factor, count)")
        h0 = ck.number(val.get("h0", 0.2), path + ("h0",), lo=0, hi=1, lo_open=True)
        factor = ck.number(val.get("factor", 0.5), path + ("factor",), lo=0, hi=1, lo_open=True)
        if factor >= 1:
            ck.fail(path + ("factor",), "factor must be < 1")
        count = ck.integer(val.get("count", 4), path + ("count",), lo=1)
        return [h0 * factor ** k for k in range(count)]
    if not isinstance(val, list) or not val:
        ck.fail(path, "expected a list or {h0, factor, count}")
    hs = [ck.number(v, path + (i,), lo=0, hi=1, lo_open=True) for i, v in enumerate(val)]
    for i in range(1, len(hs)):
        if hs[i] >= hs[i - 1]:
            ck.fail(path + (i,), "schedule must be strictly decreasing")
    return hs


def _grid(val, ck: _Checker) -> list:
    path = ("lambda_grid",)
    if isinstance(val, dict):
        for key in val:
            if key not in ("start", "stop", "num"):
                ck.fail(path + (key,), "unknown key (start, stop, num)")
        start = ck.number(val.get("start", 0.0), path + ("start",))
        stop = ck.number(val.get("stop", 100.0), path + ("stop",))
        num = ck.integer(val.get("num", 11), path + ("num",), lo=1)
        lams = np.linspace(start, stop, num).tolist()
    elif isinstance(val, list) and val:
        lams = [ck.number(v, path + (i,)) for i, v in enumerate(val)]
    else:
        ck.fail(path, "expected a list or {start, stop, num}")
    for i in range(1, len(lams)):
        if lams[i] <= lams[i - 1]:
            ck.fail(path + (i,) if not isinstance(val, dict) else path,
                    "grid must be strictly increasing")
    return lams


def _section(raw, name, ck: _Checker) -> dict:
    val = raw[name]
    if not isinstance(val, dict):
        ck.fail((name,), "expected a mapping")
    for key in val:
        if key not in DEFAULTS[name]:
            ck.fail((name, key), "unknown key")
    return val


def _validate(raw: dict, lines: dict, source: Optional[str]) -> ExperimentConfig:
    ck = _Checker(lines)
    if not isinstance(raw, dict):
        ck.fail((), "config must be a mapping")
    for key in raw:
        if key not in _TOP_KEYS:
            ck.fail((key,), "unknown top-level key")
    if "model" not in raw:
        ck.fail(("model",), "missing model block")
    user = raw
    raw = _merge(DEFAULTS, user)
    model = _model_block(raw["model"], ck)

    g = raw["grade"]
    if not isinstance(g, list) or len(g) != 2:
        ck.fail(("grade",), "expected [i, j]")
    grade = Bigrade(ck.integer(g[0], ("grade", 0), lo=0), ck.integer(g[1], ("grade", 1), lo=0))
    if model["type"] == "flat":
        p, q = model["p"], model["n"] - model["p"]
    else:
        p = q = 1
        if grade != FUNCTIONS:
            ck.fail(("grade",), "the fibered model supports functions only")
    if grade.i > p or grade.j > q:
        ck.fail(("grade",), f"bigrade {grade} impossible for p={p}, q={q}")

    hs = _schedule(raw["h_schedule"], ck)
    lams = _grid(raw["lambda_grid"], ck)

    spec = _section(raw, "spectrum", ck)
    spectrum = {"lambda_max": ck.number(spec["lambda_max"], ("spectrum", "lambda_max"), lo=0),
                "count": ck.integer(spec["count"], ("spectrum", "count"), lo=1)}
    ht = _section(raw, "heat", ck)
    ts = ht["t"] if isinstance(ht["t"], list) else [ht["t"]]
    heat = {"t": [ck.number(t, ("heat", "t", i), lo=0, lo_open=True) for i, t in enumerate(ts)],
            "lambda_max": (None if ht["lambda_max"] is None else
                           ck.number(ht["lambda_max"], ("heat", "lambda_max"), lo=0)),
            "count": ck.integer(ht["count"], ("heat", "count"), lo=1)}

    # the function block replaces the default wholesale (families differ in keys)
    fn = user.get("function", DEFAULTS["function"])
    if not isinstance(fn, dict):
        ck.fail(("function",), "expected a mapping")
    family = fn.get("family", "gaussian")
    params = {"gaussian": ("t",), "bump": ("alpha", "beta"),
              "smoothed_indicator": ("lam", "width")}
    if family not in params:
        ck.fail(("function", "family"), f"unknown family {family!r} ({', '.join(params)})")
    function = {"family": family}
    for key in fn:
        if key != "family" and key not in params[family]:
            ck.fail(("function", key), f"unknown parameter for {family}")
    for key in params[family]:
        if key not in fn:
            ck.fail(("function", key), f"missing parameter for {family}")
        function[key] = ck.number(fn[key], ("function", key), lo=0, lo_open=key != "alpha")
    if family == "bump" and function["beta"] <= function["alpha"]:
        ck.fail(("function", "beta"), "beta must exceed alpha")

    br = _section(raw, "branches", ck)
    exclude = br["exclude_leaf_harmonic"]
    if not isinstance(exclude, bool):
        ck.fail(("branches", "exclude_leaf_harmonic"), "expected true or false")
    branches = {"count": ck.integer(br["count"], ("branches", "count"), lo=1),
                "exclude_leaf_harmonic": exclude,
                "max_window": ck.integer(br["max_window"], ("branches", "max_window"), lo=1)}

    tol = _section(raw, "tolerances", ck)
    tolerances = {"residual": ck.number(tol["residual"], ("tolerances", "residual"),
                                        lo=0, lo_open=True)}
    ver = _section(raw, "verify", ck)
    if ver["scale"] not in ("reduced", "full"):
        ck.fail(("verify", "scale"), "expected reduced or full")
    skip = ver["skip"]
    if not isinstance(skip, list):
        ck.fail(("verify", "skip"), "expected a list of criterion ids")
    verify = {"scale": ver["scale"],
              "skip": sorted(ck.integer(v, ("verify", "skip", i), lo=1) for i, v in enumerate(skip))}

    budget = raw["budget"]
    if isinstance(budget, float) and budget.is_integer():
        budget = int(budget)
    budget = ck.integer(budget, ("budget",), lo=1)
    max_eigs = ck.integer(raw["max_eigs"], ("max_eigs",), lo=1)
    if not isinstance(raw["output_dir"], str):
        ck.fail(("output_dir",), "expected a path string")
    seed = ck.integer(raw["seed"], ("seed",), lo=0)

    resolved = {"model": model, "grade": [grade.i, grade.j], "h_schedule": hs,
                "lambda_grid": lams, "spectrum": spectrum, "heat": heat, "function": function,
                "branches": branches, "budget": budget, "max_eigs": max_eigs,
                "tolerances": tolerances, "verify": verify, "output_dir": raw["output_dir"],
                "seed": seed}
    return ExperimentConfig(model, grade, hs, lams, spectrum, heat, function, branches,
                            budget, max_eigs, tolerances, verify, raw["output_dir"], seed,
                            source, resolved, lines)


def parse_config(text: str, source: Optional[str] = None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if raw is None:
        raise ConfigError("empty config", field="model")
    return _validate(raw, _line_map(text), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, str(path))


__all__ = ["DEFAULTS", "ExperimentConfig", "parse_config", "load_config", "AdialabError"]
