"""Adiabatic-limit predictions and the experiments that test them.

For codimension q the leading coefficients (of h^{-q}) are

* counting:  (4π)^{-q/2} / Γ(q/2+1) · ∫_{(-∞,λ]} (λ-τ)^{q/2} dN_F(τ)
* heat:      (4πt)^{-q/2} · ∫ e^{-tτ} dN_F(τ)
* tr f(L_h): (4π)^{-q/2} / Γ(q/2) · ∫∫_{σ>0} σ^{q/2-1} f(τ+σ) dσ dN_F(τ)
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import (AdialabError, BudgetExceeded, InsufficientData, MatchAmbiguity,
                     NoConvergence, TailNotNegligible, UnsupportedTail)
from .leafwise import (LeafwiseDistribution, leafwise_distribution_fibered,
                       leafwise_distribution_flat)
from .models import Bigrade, FiberedTorusModel, FlatLinearFoliation, FUNCTIONS
from .operators import DiscreteOperatorPair, assemble_fibered_operators
from .spectra import (CountingFunction, Gaussian, TestFunction, count_modes,
                      enumerate_mode_energies, fibered_eigenpairs)

NEG_INFINITY = -math.inf
OVERLAP_THRESHOLD = 0.5
EXPONENT_SLACK = 0.15
_QUAD = dict(epsabs=0.0, epsrel=1e-11, limit=400)

Distribution = Union[LeafwiseDistribution, CountingFunction]


def _cf(NF: Distribution) -> CountingFunction:
    return NF.counting if isinstance(NF, LeafwiseDistribution) else NF


# -- right-hand sides ---------------------------------------------------------

def rhs_counting(NF: Distribution, lam: float, q: int) -> float:
    """Coefficient of h^{-q} in the asymptotics of N_h(λ)."""
    if q < 1:
        raise ValueError("codimension must be >= 1")
    if lam < 0:
        return 0.0
    cf = _cf(NF)
    if lam > cf.tau_max:
        raise ValueError(f"λ={lam} exceeds the resolved range {cf.tau_max} of N_F")
    half = q / 2
    live = cf.atoms <= lam
    total = float(np.sum(cf.masses[live] * (lam - cf.atoms[live]) ** half))
    if cf.has_density and lam > 0:
        c, a = cf.power_coef, cf.power_exp
        val, _ = integrate.quad(lambda tau: c * a, 0.0, lam, weight="alg",
                                wvar=(a - 1.0, half), **_QUAD)
        total += val
    return (4 * math.pi) ** (-half) / math.gamma(half + 1) * total


def leafwise_heat(NF: Distribution, t: float) -> float:
    """∫ e^{-tτ} dN_F(τ), the integrated leafwise heat trace."""
    if t <= 0:
        raise ValueError("t must be positive")
    cf = _cf(NF)
    total = float(np.sum(cf.masses * np.exp(-t * cf.atoms)))
    if cf.has_density:
        a = cf.power_exp
        total += cf.power_coef * math.gamma(a + 1) * t ** (-a)
    if math.isfinite(cf.tau_max) and math.exp(-t * cf.tau_max) > 1e-12 * total:
        warnings.warn(f"leafwise heat: atoms truncated at {cf.tau_max:g} with t={t:g}",
                      TailNotNegligible, stacklevel=2)
    return total


def rhs_heat(NF: Distribution, t: float, h: float, q: int) -> float:
    """Leading asymptotics (4πt)^{-q/2} h^{-q} ∫ e^{-tτ} dN_F of tr e^{-tL_h}."""
    return (4 * math.pi * t) ** (-q / 2) * h ** (-q) * leafwise_heat(NF, t)


def _pieces(lo, hi, cuts):
    pts = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
    return list(zip(pts[:-1], pts[1:]))


def _weighted_integral(g, lo, hi, beta, cuts=(), tail_scale=None):
    """∫_lo^hi x^beta g(x) dx for lo >= 0, hi possibly infinite."""
    if hi <= lo:
        return 0.0
    if not math.isfinite(hi):
        cut = max([lo, *cuts]) + (50.0 / tail_scale if tail_scale else 50.0)
        head = _weighted_integral(g, lo, cut, beta, cuts)
        tail, _ = integrate.quad(lambda x: x ** beta * g(x), cut, math.inf, **_QUAD)
        return head + tail
    total = 0.0
    for a, b in _pieces(lo, hi, cuts):
        if a == 0.0 and beta != 0.0:
            val, _ = integrate.quad(g, a, b, weight="alg", wvar=(beta, 0.0), **_QUAD)
        else:
            val, _ = integrate.quad(lambda x: x ** beta * g(x), a, b, **_QUAD)
        total += val
    return total


def _inner(f: TestFunction, tau: float, q: int) -> float:
    lo_f, hi_f = f.support
    hi = hi_f - tau
    lo = max(0.0, lo_f - tau)
    cuts = [bp - tau for bp in f.breakpoints]
    return _weighted_integral(lambda s: f.scalar(tau + s), lo, hi, q / 2 - 1, cuts,
                              tail_scale=f.decay or None)


def rhs_trace_of_function(NF: Distribution, f: TestFunction, q: int) -> float:
    """Coefficient of h^{-q} in the asymptotics of tr f(L_h), by quadrature."""
    cf = _cf(NF)
    hi_f = f.support[1]
    if math.isfinite(hi_f):
        if hi_f > cf.tau_max:
            raise UnsupportedTail(f"{f!r} reaches beyond the resolved N_F range {cf.tau_max}")
    elif f.decay <= 0:
        raise UnsupportedTail(f"{f!r} neither decays nor has bounded support")
    elif math.isfinite(cf.tau_max) and math.exp(-f.decay * cf.tau_max) > 1e-12:
        warnings.warn(f"{f!r}: N_F atoms truncated at {cf.tau_max:g}", TailNotNegligible,
                      stacklevel=2)
    half = q / 2
    live = cf.atoms < hi_f
    total = sum(m * _inner(f, tau, q) for tau, m in zip(cf.atoms[live], cf.masses[live]))
    if cf.has_density and hi_f > 0:
        c, a = cf.power_coef, cf.power_exp
        total += c * a * _weighted_integral(
            lambda tau: _inner(f, tau, q), 0.0, hi_f, a - 1.0,
            [bp for bp in f.breakpoints if bp > 0], tail_scale=f.decay or None)
    return (4 * math.pi) ** (-half) / math.gamma(half) * total


# -- exponent estimator -------------------------------------------------------

@dataclass(frozen=True)
class RExponent:
    r: float
    residual: float
    n_points: int
    bracket: tuple

    @property
    def within_bracket(self) -> bool:
        lo, hi = self.bracket
        return self.r == NEG_INFINITY or lo - EXPONENT_SLACK <= self.r <= hi + EXPONENT_SLACK


def estimate_r_exponent(counts: Sequence[float], h_schedule: Sequence[float],
                        q: Optional[int] = None) -> RExponent:
    """Least-squares slope of ln N_h(λ) against −ln h.

    Returns ``r = -inf`` when every count is zero.
    """
    counts = np.asarray(counts, dtype=np.float64)
    hs = np.asarray(h_schedule, dtype=np.float64)
    if counts.shape != hs.shape:
        raise ValueError("counts and schedule differ in length")
    bracket = (0.0, float(q) if q is not None else math.nan)
    if hs.size < 3:
        raise InsufficientData(f"need >= 3 schedule points, got {hs.size}")
    pos = counts > 0
    if not pos.any():
        return RExponent(NEG_INFINITY, 0.0, int(hs.size), bracket)
    if pos.sum() < 3:
        raise InsufficientData(f"only {int(pos.sum())} positive counts")
    x = -np.log(hs[pos])
    y = np.log(counts[pos])
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return RExponent(float(slope), resid, int(pos.sum()), bracket)


# -- sweeps -------------------------------------------------------------------

@dataclass
class SweepReport:
    model_id: str
    grade: Bigrade
    q: int
    h_schedule: np.ndarray
    lambda_grid: np.ndarray
    lhs: np.ndarray
    missing: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    exponents: list
    flagged: np.ndarray
    runtimes: np.ndarray = field(repr=False, default=None)
    notes: list = field(default_factory=list)

    def rows(self):
        for a, h in enumerate(self.h_schedule):
            for b, lam in enumerate(self.lambda_grid):
                yield (float(h), float(lam),
                       None if self.missing[a, b] else int(self.lhs[a, b]),
                       float(self.rhs[b]), float(self.ratio[a, b]))

    def summary(self) -> dict:
        exps = []
        for lam, e in zip(self.lambda_grid.tolist(), self.exponents):
            if isinstance(e, RExponent):
                exps.append({"lambda": lam, "r": e.r, "residual": e.residual,
                             "n_points": e.n_points, "within_bracket": e.within_bracket})
            else:
                exps.append({"lambda": lam, "r": None, "error": str(e)})
        return {
            "model": self.model_id, "grade": [self.grade.i, self.grade.j], "q": self.q,
            "h_schedule": self.h_schedule.tolist(), "lambda_grid": self.lambda_grid.tolist(),
            "exponents": exps, "flagged_lambdas": self.lambda_grid[self.flagged].tolist(),
            "missing_cells": int(self.missing.sum()), "notes": list(self.notes),
            "pass": {"no_flagged_cells": not bool(self.flagged.any()),
                     "exponents_in_bracket": all(e.get("within_bracket", True) for e in exps)},
        }


def _check_schedule(h_schedule):
    hs = np.asarray(h_schedule, dtype=np.float64)
    if hs.ndim != 1 or hs.size == 0:
        raise ValueError("h schedule must be a nonempty list")
    if np.any(hs <= 0) or np.any(hs > 1):
        raise ValueError("h schedule values must lie in (0, 1]")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("h schedule must be strictly decreasing")
    return hs


def _flat_counts(model, grade, h, lams, budget):
    try:
        return count_modes(model, grade, h, lams, budget=budget), []
    except BudgetExceeded as exc:
        out = np.full(lams.shape, -1, dtype=np.int64)
        notes = []
        for j, lam in enumerate(lams):
            try:
                out[j] = count_modes(model, grade, h, [lam], budget=budget)[0]
            except BudgetExceeded as cell:
                notes.append(f"h={h:g} λ={lam:g}: {cell}")
        return out, notes or [str(exc)]


def _fibered_counts(pair, h, lams, max_eigs):
    N = pair.size
    count = min(N, 16)
    top = lams.max()
    while True:
        vals, _ = fibered_eigenpairs(pair, h, count)
        if vals.max() > top or count >= N:
            break
        if count >= max_eigs:
            out = np.where(lams < vals.max(),
                           np.searchsorted(np.sort(vals), lams, side="right"), -1)
            return out.astype(np.int64), [f"h={h:g}: only {count} eigenvalues resolved "
                                          f"(up to {vals.max():.6g})"]
        count = min(N, max_eigs, 2 * count)
    vals = np.sort(vals)
    return np.searchsorted(vals, lams, side="right").astype(np.int64), []


def run_sweep(model: Union[FlatLinearFoliation, FiberedTorusModel], grade: Bigrade,
              h_schedule: Sequence[float], lambda_grid: Sequence[float], *,
              NF: Optional[Distribution] = None, workers: int = 1,
              budget: int = 10**8, max_eigs: int = 400) -> SweepReport:
    """Tabulate N_h(λ) against its leading-order prediction."""
    hs = _check_schedule(h_schedule)
    lams = np.asarray(lambda_grid, dtype=np.float64)
    if lams.ndim != 1 or np.any(np.diff(lams) <= 0) or not np.all(np.isfinite(lams)):
        raise ValueError("λ grid must be finite and strictly increasing")
    fibered = isinstance(model, FiberedTorusModel)
    if fibered:
        if grade != FUNCTIONS:
            raise ValueError("the fibered model supports functions only")
        pair = assemble_fibered_operators(model)
        NF = NF if NF is not None else leafwise_distribution_fibered(model)
    else:
        NF = NF if NF is not None else leafwise_distribution_flat(
            model, grade, tau_max=max(1e4, 2 * float(lams.max(initial=0.0))))
    q = model.q

    def cell(h):
        t0 = time.perf_counter()
        try:
            if fibered:
                out, notes = _fibered_counts(pair, h, lams, max_eigs)
            else:
                out, notes = _flat_counts(model, grade, h, lams, budget)
        except (NoConvergence, BudgetExceeded) as exc:
            out, notes = np.full(lams.shape, -1, dtype=np.int64), [f"h={h:g}: {exc}"]
        return out, notes, time.perf_counter() - t0

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(cell, hs))
    else:
        results = [cell(h) for h in hs]

    lhs = np.stack([r[0] for r in results])
    missing = lhs < 0
    notes = [n for r in results for n in r[1]]
    runtimes = np.array([r[2] for r in results])
    rhs = np.array([rhs_counting(NF, lam, q) for lam in lams])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((rhs > 0) & ~missing, hs[:, None] ** q * lhs / rhs, np.nan)
    exponents = []
    for j in range(lams.size):
        ok = ~missing[:, j]
        try:
            exponents.append(estimate_r_exponent(lhs[ok, j], hs[ok], q))
        except InsufficientData as exc:
            exponents.append(exc)
    # a positive count where the prediction vanishes identically signals the
    # nonamenable regime; λ = 0 itself is excluded (constant forms)
    flagged = (lams > 0) & (rhs == 0) & np.any((lhs > 0) & ~missing, axis=0)
    model_id = getattr(model, "name", type(model).__name__)
    return SweepReport(model_id, grade, q, hs, lams, np.where(missing, -1, lhs), missing,
                       rhs, ratio, exponents, flagged, runtimes, notes)


# -- eigenvalue branches ------------------------------------------------------

@dataclass
class EigenBranch:
    """One analytic eigenvalue branch λ(h) sampled along a decreasing schedule.

    ``hf`` holds Hellmann-Feynman derivatives (dL_h/dh v, v) = 2h(Δ_H v, v);
    ``derivative`` holds finite-difference estimates along the branch.
    """

    branch_id: int
    h: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    hf: np.ndarray
    method: str
    limit_estimate: float
    richardson: bool = False
    fit_residual: Optional[float] = None
    leaf_energy: Optional[float] = None
    transverse_energy: Optional[float] = None
    multiplicity: int = 1
    truncated: bool = False
    note: str = ""

    def rows(self):
        for h, v, d, g in zip(self.h, self.values, self.derivative, self.hf):
            yield (self.branch_id, float(h), float(v), float(d), float(g))


def _fd_derivative(h, v):
    """Three-point nonuniform finite differences; one-sided at the ends."""
    n = len(h)
    d = np.full(n, np.nan)
    if n < 2:
        return d
    d[0] = (v[1] - v[0]) / (h[1] - h[0])
    d[-1] = (v[-1] - v[-2]) / (h[-1] - h[-2])
    for i in range(1, n - 1):
        h1, h2 = h[i] - h[i - 1], h[i + 1] - h[i]
        d[i] = (-h2 / (h1 * (h1 + h2)) * v[i - 1] + (h2 - h1) / (h1 * h2) * v[i]
                + h1 / (h2 * (h1 + h2)) * v[i + 1])
    return d


def _richardson(h, v):
    """Fit v = c0 + c2 h² and return (c0, relative max residual)."""
    M = np.column_stack([np.ones_like(h), h * h])
    coef, *_ = np.linalg.lstsq(M, v, rcond=None)
    resid = np.abs(M @ coef - v).max() / max(1.0, np.abs(v).max())
    return float(coef[0]), float(resid)


def _flat_branches(model, grade, hs, count, exclude_leaf_harmonic):
    mult = grade.multiplicity(model.p, model.q)
    h0 = hs[0]
    lam_max = 4 * math.pi ** 2
    while True:
        eF, eH = enumerate_mode_energies(model, h0, lam_max)
        keys = np.round(np.column_stack([eF, eH]), 9)
        classes, counts = np.unique(keys, axis=0, return_counts=True)
        if exclude_leaf_harmonic:
            keep = classes[:, 0] > 1e-9
            classes, counts = classes[keep], counts[keep]
        if len(classes) >= count:
            break
        lam_max *= 2
    # representative (unrounded) energies for each class
    reps = {tuple(k): (f, g) for k, f, g in zip(map(tuple, keys), eF, eH)}
    vals0 = classes[:, 0] + h0 * h0 * classes[:, 1]
    order = np.lexsort((classes[:, 0], vals0))[:count]
    branches = []
    for b, c in enumerate(order):
        f, g = reps[tuple(classes[c])]
        values = f + hs * hs * g
        hf = 2.0 * hs * g
        # branches are exactly f + h²g: the limit is f; the fit is a diagnostic
        lim = float(f)
        resid = _richardson(hs, values)[1] if hs.size >= 2 else 0.0
        branches.append(EigenBranch(b, hs.copy(), values, _fd_derivative(hs, values), hf,
                                    "analytic", lim, True, resid, float(f), float(g),
                                    int(counts[c]) * mult))
    return branches


def _clusters(vals, tol=1e-8):
    groups, start = [], 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[start] > tol * max(1.0, abs(vals[start])):
            groups.append(list(range(start, i)))
            start = i
    return groups


def _fibered_branches(pair, hs, count, extra, max_window):
    B = pair.B
    n_solve = min(pair.size, count + extra)
    vals, vecs = fibered_eigenpairs(pair, hs[0], n_solve)
    cur = [vecs[:, b] for b in range(count)]
    hist = [[(hs[0], vals[b], 2 * hs[0] * float(vecs[:, b] @ (B @ vecs[:, b])))]
            for b in range(count)]
    alive = [True] * count
    notes = [""] * count
    for h in hs[1:]:
        # dλ/dh = 2h(Bv, v) >= 0: every live branch drops to at most its last value
        ceiling = max(hist[b][-1][1] for b in range(count) if alive[b]) if any(alive) else 0.0
        while True:
            vals, vecs = fibered_eigenpairs(pair, h, n_solve)
            if vals.max() > ceiling * (1 + 1e-8) or n_solve >= min(pair.size, max_window):
                break
            n_solve = min(pair.size, max_window, 2 * n_solve)
        groups = _clusters(vals)
        capacity = {g[0]: len(g) for g in groups}
        assigned = {g[0]: [] for g in groups}
        cand = []
        for b in range(count):
            if not alive[b]:
                continue
            for g in groups:
                ov = float(np.linalg.norm(vecs[:, g].T @ cur[b]))
                cand.append((ov, b, g[0]))
        cand.sort(key=lambda t: (-t[0], t[1], t[2]))
        done = set()
        for ov, b, g0 in cand:
            if b in done or len(assigned[g0]) >= capacity[g0]:
                continue
            if ov < OVERLAP_THRESHOLD:
                continue
            g = next(gr for gr in groups if gr[0] == g0)
            V = vecs[:, g]
            v = V @ (V.T @ cur[b])
            for w in assigned[g0]:
                v -= (w @ v) * w
            v /= np.linalg.norm(v)
            assigned[g0].append(v)
            lam = float(v @ (pair.matrix(h) @ v))
            hist[b].append((h, lam, 2 * h * float(v @ (B @ v))))
            cur[b] = v
            done.add(b)
        for b in range(count):
            if alive[b] and b not in done:
                alive[b] = False
                notes[b] = f"{MatchAmbiguity.__name__}: best overlap < {OVERLAP_THRESHOLD} at h={h:g}"
    branches = []
    for b in range(count):
        hh = np.array([r[0] for r in hist[b]])
        vv = np.array([r[1] for r in hist[b]])
        vv = np.where(np.abs(vv) < 1e-12, 0.0, vv)
        gg = np.array([r[2] for r in hist[b]])
        branches.append(EigenBranch(b, hh, vv, _fd_derivative(hh, vv), gg, "overlap",
                                    float(vv[-1]), False, None, truncated=not alive[b],
                                    note=notes[b]))
    return branches


def track_branches(target: Union[FlatLinearFoliation, DiscreteOperatorPair, FiberedTorusModel],
                   h_schedule: Sequence[float], count: int, *, grade: Bigrade = FUNCTIONS,
                   exclude_leaf_harmonic: bool = False, extra: int = 4,
                   max_window: int = 400) -> list:
    """Follow the ``count`` lowest eigenvalue branches along ``h_schedule``.

    Flat models give exact mode classes (eF, eH); with
    ``exclude_leaf_harmonic`` the classes with eF = 0 (whose limit is 0) are
    skipped.  Discrete pairs are matched by eigenvector overlap.
    """
    hs = _check_schedule(h_schedule)
    if count < 1:
        raise ValueError("count must be >= 1")
    if isinstance(target, FlatLinearFoliation):
        return _flat_branches(target, grade, hs, count, exclude_leaf_harmonic)
    if isinstance(target, FiberedTorusModel):
        target = assemble_fibered_operators(target)
    if exclude_leaf_harmonic:
        raise ValueError("leaf energies are only known for flat models")
    return _fibered_branches(target, hs, count, extra, max_window)


@dataclass(frozen=True)
class LimitSummary:
    lambda_lim_0: float
    lambda_leaf_bottom: float
    lambda_F0: Optional[float]
    ordering_ok: bool
    leaf_reference: Optional[float] = None
    matches_leaf: Optional[bool] = None

    def as_dict(self):
        return {"lambda_lim_0": self.lambda_lim_0, "lambda_leaf_bottom": self.lambda_leaf_bottom,
                "lambda_F0": self.lambda_F0 if self.lambda_F0 is not None else "not-computed",
                "ordering_ok": self.ordering_ok, "leaf_reference": self.leaf_reference,
                "matches_leaf": self.matches_leaf}


def limit_summary(branches: Sequence[EigenBranch], NF: LeafwiseDistribution,
                  grade: Bigrade = FUNCTIONS, *, leaf_only: bool = False,
                  tol: float = 1e-9) -> LimitSummary:
    """Check λ_{F,0} <= λ_{lim,0} <= λ_{ℱ,0} on tracked branches.

    With ``leaf_only`` the comparison is restricted to branches with positive
    leaf energy and made against the first nonzero leafwise atom.
    """
    if not branches:
        raise ValueError("no branches")
    if leaf_only:
        if any(b.leaf_energy is None for b in branches):
            raise ValueError("leaf energies unknown for these branches")
        branches = [b for b in branches if b.leaf_energy > tol]
        if not branches:
            raise ValueError("no branch with positive leaf energy")
    lim0 = min(b.limit_estimate for b in branches)
    bottom = NF.bottom
    lamF0 = 0.0 if grade.k == 0 else None
    ref = match = None
    upper = bottom
    if leaf_only:
        ref = upper = NF.first_excited_atom(tol)
        match = abs(lim0 - ref) <= tol * max(1.0, abs(ref))
    ok = lim0 <= upper + tol and (lamF0 is None or lamF0 <= lim0 + tol)
    return LimitSummary(lim0, bottom, lamF0, ok, ref, match)
