"""Command-line runner: ``adialab {spectrum,sweep,heat,branches,verify} --config FILE``."""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .acceptance import exit_code, run_verify
from .adiabatic import limit_summary, rhs_heat, rhs_trace_of_function, run_sweep, track_branches
from .config import ExperimentConfig, load_config
from .errors import AdialabError, ConfigError
from .io import provenance, short_hash, write_csv, write_json
from .leafwise import leafwise_distribution_fibered, leafwise_distribution_flat
from .models import FiberedTorusModel
from .operators import assemble_fibered_operators
from .spectra import enumerate_modes, heat_trace, solve_fibered_spectrum, trace_of_function


def _stem(cfg: ExperimentConfig, kind: str) -> str:
    g = cfg.grade
    return f"{kind}_{cfg.model_id}_g{g.i}{g.j}_{short_hash(cfg.h_schedule)}"


def _meta(cfg: ExperimentConfig) -> dict:
    return provenance(cfg.hash, cfg.seed)


def _leafwise(cfg, model):
    if isinstance(model, FiberedTorusModel):
        return leafwise_distribution_fibered(model)
    return leafwise_distribution_flat(model, cfg.grade)


def _spectrum_at(cfg, model, pair, h, lambda_max=None, count=None):
    if pair is not None:
        return solve_fibered_spectrum(pair, h, min(pair.size, count or cfg.spectrum["count"]),
                                      tol=cfg.tolerances["residual"], keep_vectors=False)
    return enumerate_modes(model, cfg.grade, h,
                           cfg.spectrum["lambda_max"] if lambda_max is None else lambda_max,
                           budget=cfg.budget)


def _setup(cfg):
    model = cfg.build_model()
    pair = assemble_fibered_operators(model) if isinstance(model, FiberedTorusModel) else None
    return model, pair


def cmd_spectrum(cfg: ExperimentConfig) -> list:
    model, pair = _setup(cfg)
    out = Path(cfg.output_dir)
    stem = _stem(cfg, "spectrum")
    meta = _meta(cfg)
    files, entries = [], []
    for k, h in enumerate(cfg.h_schedule):
        sample = _spectrum_at(cfg, model, pair, h)
        path = write_csv(out / f"{stem}_h{k:02d}.csv", ("eigenvalue", "multiplicity"),
                         sample.to_rows(), meta)
        files.append(path)
        entries.append({"file": path.name, **sample.manifest()})
    files.append(write_json(out / f"{stem}.json",
                            {"command": "spectrum", "config": cfg.recorded, "spectra": entries},
                            meta))
    return files


def cmd_sweep(cfg: ExperimentConfig, workers: int = 1) -> list:
    model, _ = _setup(cfg)
    NF = _leafwise(cfg, model)
    rep = run_sweep(model, cfg.grade, cfg.h_schedule, cfg.lambda_grid, NF=NF, workers=workers,
                    budget=cfg.budget, max_eigs=cfg.max_eigs)
    out = Path(cfg.output_dir)
    stem = _stem(cfg, "sweep")
    meta = _meta(cfg)
    files = [
        write_csv(out / f"{stem}.csv", ("h", "lambda", "N_h", "rhs", "ratio"), rep.rows(), meta),
        write_csv(out / f"{_stem(cfg, 'leafwise')}.csv", ("tau", "jump_or_density", "kind"),
                  NF.to_rows(), meta),
    ]
    files.append(write_json(out / f"{stem}.json",
                            {"command": "sweep", "config": cfg.recorded,
                             "summary": rep.summary(), "leafwise": NF.manifest()}, meta))
    return files


def _heat_lambda_max(cfg, ts) -> float:
    if cfg.heat["lambda_max"] is not None:
        return cfg.heat["lambda_max"]
    # e^{-tλ} below ~1e-19 at the cutoff
    return 45.0 / min(ts)


def _function_lambda_max(cfg, f) -> float:
    hi = f.support[1]
    return hi if math.isfinite(hi) else 45.0 / f.decay


def cmd_heat(cfg: ExperimentConfig) -> list:
    model, pair = _setup(cfg)
    NF = _leafwise(cfg, model)
    q = model.q
    ts = cfg.heat["t"]
    f = cfg.test_function()
    heat_rows, fun_rows, notes = [], [], []
    f_rhs = rhs_trace_of_function(NF, f, q)
    for h in cfg.h_schedule:
        if pair is not None:
            heat_sample = fun_sample = _spectrum_at(cfg, model, pair, h, count=cfg.heat["count"])
        else:
            heat_sample = _spectrum_at(cfg, model, None, h, _heat_lambda_max(cfg, ts))
            fun_sample = _spectrum_at(cfg, model, None, h, _function_lambda_max(cfg, f))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            for t in ts:
                tr = heat_trace(heat_sample, t)
                pred = rhs_heat(NF, t, h, q)
                heat_rows.append((t, h, tr, pred, abs(tr - pred) / pred if pred else math.nan,
                                  heat_sample.complete))
            try:
                tf = trace_of_function(fun_sample, f)
                pred = f_rhs / h ** q
                fun_rows.append((repr(f), h, tf, pred, abs(tf - pred) / abs(pred) if pred else math.nan))
            except AdialabError as exc:
                notes.append(f"h={h:g}: {type(exc).__name__}: {exc}")
        notes.extend(f"h={h:g}: {w.message}" for w in caught)
    out = Path(cfg.output_dir)
    stem = _stem(cfg, "heat")
    meta = _meta(cfg)
    return [
        write_csv(out / f"{stem}.csv",
                  ("t", "h", "trace", "rhs", "relative_error", "complete"), heat_rows, meta),
        write_csv(out / f"{_stem(cfg, 'trace')}.csv",
                  ("function", "h", "trace", "rhs", "relative_error"), fun_rows, meta),
        write_json(out / f"{stem}.json",
                   {"command": "heat", "config": cfg.recorded, "notes": notes,
                    "leafwise": NF.manifest()}, meta),
    ]


def cmd_branches(cfg: ExperimentConfig) -> list:
    model, pair = _setup(cfg)
    NF = _leafwise(cfg, model)
    exclude = cfg.branches["exclude_leaf_harmonic"]
    target = pair if pair is not None else model
    branches = track_branches(target, cfg.h_schedule, cfg.branches["count"], grade=cfg.grade,
                              exclude_leaf_harmonic=exclude,
                              max_window=cfg.branches["max_window"])
    live = [b for b in branches if not b.truncated] or branches
    summary = limit_summary(live, NF, cfg.grade, leaf_only=exclude)
    out = Path(cfg.output_dir)
    stem = _stem(cfg, "branches")
    meta = _meta(cfg)
    rows = [r for b in branches for r in b.rows()]
    info = [{"branch_id": b.branch_id, "method": b.method, "limit_estimate": b.limit_estimate,
             "fit_residual": b.fit_residual, "leaf_energy": b.leaf_energy,
             "transverse_energy": b.transverse_energy, "multiplicity": b.multiplicity,
             "truncated": b.truncated, "note": b.note} for b in branches]
    return [
        write_csv(out / f"{stem}.csv", ("branch_id", "h", "lambda", "derivative", "hf"),
                  rows, meta),
        write_json(out / f"{stem}.json",
                   {"command": "branches", "config": cfg.recorded, "branches": info,
                    "limits": summary.as_dict()}, meta),
    ]


def cmd_verify(cfg: ExperimentConfig, skip: Sequence[int] = (), scale: Optional[str] = None,
               stream=None) -> int:
    stream = stream or sys.stdout
    print(f"adialab {__version__} verify: {cfg.source or '<config>'} "
          f"(config {cfg.hash[:12]}, seed {cfg.seed})", file=stream)
    results = run_verify(cfg, scale=scale, skip=skip,
                         log=lambda line: print(line, file=stream, flush=True))
    code = exit_code(results)
    failed = [r.id for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} passed"
          + (f"; failing ids {failed}; exit {code}" if failed else ""), file=stream)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adialab",
                                     description="Adiabatic-limit spectral experiments.")
    parser.add_argument("--version", action="version", version=f"adialab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("spectrum", "eigenvalues of L_h for each scheduled h"),
                       ("sweep", "N_h(lambda) against its leading-order prediction"),
                       ("heat", "heat and test-function traces against predictions"),
                       ("branches", "eigenvalue branches and their limits"),
                       ("verify", "invariant checks and acceptance criteria")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="YAML experiment file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
        if name == "verify":
            p.add_argument("--skip", type=int, nargs="*", default=[],
                           help="criterion ids to skip")
            p.add_argument("--scale", choices=("reduced", "full"), default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config).with_overrides(output_dir=args.out, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "verify":
        return cmd_verify(cfg, skip=args.skip, scale=args.scale)
    try:
        if args.command == "spectrum":
            files = cmd_spectrum(cfg)
        elif args.command == "sweep":
            files = cmd_sweep(cfg, workers=args.workers)
        elif args.command == "heat":
            files = cmd_heat(cfg)
        else:
            files = cmd_branches(cfg)
    except (AdialabError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
