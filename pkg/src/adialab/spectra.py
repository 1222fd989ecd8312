"""Spectra of L_h and the scalar quantities derived from them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import BudgetExceeded, NoConvergence, TailNotNegligible, UnsupportedTail
from .models import Bigrade, FlatLinearFoliation, FUNCTIONS
from .operators import DiscreteOperatorPair

MERGE_TOL = 1e-9
NEG_TOL = 1e-9
TAIL_RTOL = 1e-12
DEFAULT_BUDGET = 10**8


def merge_atoms(values, weights=1.0, tol: float = MERGE_TOL):
    """Sort ``values`` and merge runs closer than ``tol`` into weighted atoms.

    Returns ``(atoms, masses)``; each atom sits at the smallest value of its
    run.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), values.shape)
    if values.size == 0:
        return np.zeros(0), np.zeros(0)
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    starts = np.flatnonzero(np.concatenate([[True], np.diff(v) > tol]))
    return v[starts].copy(), np.add.reduceat(w, starts)


# -- counting functions -------------------------------------------------------

@dataclass(frozen=True)
class CountingFunction:
    """Nondecreasing Stieltjes function N(λ) = Σ_{τ_j ≤ λ} m_j + c·λ₊^α.

    The atomic part may carry real masses (leafwise distributions).  The
    optional power law ``c·λ^α`` is the absolutely continuous part.
    ``tau_max`` bounds the range on which the function is known exactly.
    """

    atoms: np.ndarray
    masses: np.ndarray
    power_coef: float = 0.0
    power_exp: float = 0.0
    tau_max: float = math.inf

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        masses = np.asarray(self.masses, dtype=np.float64)
        if atoms.shape != masses.shape or atoms.ndim != 1:
            raise ValueError("atoms and masses must be 1-d arrays of equal length")
        if atoms.size and (np.any(np.diff(atoms) <= 0) or atoms[0] < -NEG_TOL):
            raise ValueError("atoms must be strictly increasing and nonnegative")
        if np.any(masses <= 0) or self.power_coef < 0:
            raise ValueError("masses must be positive")
        if self.power_coef > 0 and self.power_exp <= 0:
            raise ValueError("continuous part needs a positive exponent")
        for name, arr in (("atoms", atoms), ("masses", masses)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_cum", np.cumsum(masses))

    @property
    def has_density(self) -> bool:
        return self.power_coef > 0

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        idx = np.searchsorted(self.atoms, lam, side="right")
        cum = np.concatenate([[0.0], self._cum])
        out = cum[idx]
        if self.has_density:
            out = out + self.power_coef * np.clip(lam, 0.0, None) ** self.power_exp
        return out if out.ndim else float(out)

    def density(self, tau):
        """dN/dτ of the continuous part."""
        tau = np.asarray(tau, dtype=np.float64)
        if not self.has_density:
            return np.zeros_like(tau)
        c, a = self.power_coef, self.power_exp
        with np.errstate(divide="ignore"):
            return np.where(tau > 0, c * a * np.abs(tau) ** (a - 1.0), 0.0)

    def bottom(self, tol: float = 1e-10) -> float:
        """Infimum of the support of dN."""
        if self.has_density:
            return 0.0
        pos = np.flatnonzero(self.masses > tol)
        return float(self.atoms[pos[0]]) if pos.size else math.inf

    def scaled(self, factor: float) -> "CountingFunction":
        return CountingFunction(self.atoms, self.masses * factor,
                                self.power_coef * factor, self.power_exp, self.tau_max)


# -- spectrum samples ---------------------------------------------------------

@dataclass
class SpectrumSample:
    """Eigenvalues of L_h (with multiplicities) below ``lambda_max``.

    ``complete`` is True when every eigenvalue <= lambda_max is guaranteed
    present (lattice enumeration).  Iterative solves set it False and
    record ``n_converged``.
    """

    h: float
    grade: Bigrade
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    lambda_max: float
    complete: bool = True
    n_converged: Optional[int] = None
    vectors: Optional[np.ndarray] = field(default=None, repr=False)
    raw_values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        mu = np.asarray(self.multiplicities, dtype=np.int64)
        if ev.shape != mu.shape:
            raise ValueError("eigenvalues and multiplicities differ in length")
        if ev.size and (np.any(np.diff(ev) < 0) or ev[0] < -NEG_TOL):
            raise ValueError("eigenvalues must be sorted and >= -1e-9")
        if np.any(mu < 1):
            raise ValueError("multiplicities must be >= 1")
        self.eigenvalues, self.multiplicities = ev, mu

    @property
    def total(self) -> int:
        return int(self.multiplicities.sum())

    def expanded(self) -> np.ndarray:
        """Eigenvalues repeated by multiplicity."""
        return np.repeat(self.eigenvalues, self.multiplicities)

    def to_rows(self):
        return list(zip(self.eigenvalues.tolist(), self.multiplicities.tolist()))

    def manifest(self) -> dict:
        return {"h": self.h, "grade": [self.grade.i, self.grade.j],
                "lambda_max": self.lambda_max, "complete": self.complete,
                "n_converged": self.n_converged, "atoms": int(self.eigenvalues.size),
                "total_multiplicity": self.total}


def _check_h(h):
    if not 0.0 < h <= 1.0:
        raise ValueError(f"h must lie in (0, 1], got {h}")


def box_bound(lambda_max: float, h: float) -> int:
    """Integer box radius containing every mode with eigenvalue <= lambda_max."""
    # L_h >= 4π²h²|k|² since h <= 1
    return int(math.ceil(math.sqrt(max(lambda_max, 0.0)) / (2.0 * math.pi * h)))


def _budget(model, bound, budget):
    cand = (2 * bound + 1) ** model.n
    if cand > budget:
        raise BudgetExceeded(f"{cand:.3g} box candidates exceed the budget {budget:.3g}")


def enumerate_mode_energies(model: FlatLinearFoliation, h: float, lambda_max: float,
                            budget: int = DEFAULT_BUDGET):
    """``(eF, eH)`` of every lattice mode with ``eF + h²eH <= lambda_max``."""
    _check_h(h)
    bound = box_bound(lambda_max, h)
    _budget(model, bound, budget)
    return _kernels.box_collect(model.U, model.W, h, bound, lambda_max)


def enumerate_modes(model: FlatLinearFoliation, grade: Bigrade, h: float,
                    lambda_max: float, budget: int = DEFAULT_BUDGET) -> SpectrumSample:
    """Complete spectrum of L_h on bigrade ``grade`` up to ``lambda_max``."""
    if lambda_max < 0:
        raise ValueError("lambda_max must be >= 0")
    mult = grade.multiplicity(model.p, model.q)
    eF, eH = enumerate_mode_energies(model, h, lambda_max, budget)
    atoms, counts = merge_atoms(eF + h * h * eH)
    return SpectrumSample(h, grade, atoms, counts.astype(np.int64) * mult, lambda_max)


def count_modes(model: FlatLinearFoliation, grade: Bigrade, h: float, lams,
                budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """N_h(λ) on a grid by streaming lattice count (no mode list kept)."""
    _check_h(h)
    lams = np.atleast_1d(np.asarray(lams, dtype=np.float64))
    mult = grade.multiplicity(model.p, model.q)
    out = np.zeros(lams.shape, dtype=np.int64)
    live = lams >= 0
    if not live.any():
        return out
    order = np.argsort(lams[live], kind="stable")
    grid = lams[live][order]
    bound = box_bound(grid[-1], h)
    _budget(model, bound, budget)
    counts = _kernels.box_count_grid(model.U, model.W, h, bound, grid) * mult
    vals = np.empty_like(counts)
    vals[order] = counts
    out[live] = vals
    return out


# -- fibered spectra ----------------------------------------------------------

RESID_TOL = 1e-8
_DENSE_LIMIT = 600


def fibered_eigenpairs(pair: DiscreteOperatorPair, h: float, count: int, *,
                       tol: float = RESID_TOL, budget_factor: int = 50):
    """The ``count`` smallest eigenpairs of A + h²B, residual-checked.

    Uses ARPACK's implicitly restarted Lanczos in shift-invert mode about a
    point just below the spectrum (L_h is positive semidefinite).  The
    constant mode is snapped to the exact eigenvalue 0.
    """
    _check_h(h)
    N = pair.size
    if not 1 <= count <= N:
        raise ValueError(f"count must be in 1..{N}")
    L = pair.matrix(h)
    if N <= _DENSE_LIMIT or count >= N - 1:
        vals, vecs = sla.eigh(L.toarray())
        vals, vecs = vals[:count], vecs[:, :count]
    else:
        extra = min(N - 1, count + max(4, count // 5))
        ncv = min(N, max(2 * extra + 1, 20))
        v0 = np.ones(N) / math.sqrt(N)
        vals = vecs = None
        for attempt in range(3):
            try:
                vals, vecs = spla.eigsh(L, k=extra, sigma=-1.0, which="LM", v0=v0,
                                        ncv=ncv, tol=0.0,
                                        maxiter=budget_factor * count * (attempt + 1))
                break
            except spla.ArpackNoConvergence:
                ncv = min(N, 2 * ncv)
        if vals is None:
            raise NoConvergence(f"eigsh did not converge for h={h}, count={count}")
        order = np.argsort(vals)
        vals, vecs = vals[order][:count], vecs[:, order][:, :count]
    resid = np.linalg.norm(L @ vecs - vecs * vals, axis=0)
    bad = resid > tol * np.maximum(1.0, np.abs(vals))
    if np.any(bad):
        raise NoConvergence(f"residual {resid.max():.3g} above tolerance at h={h}")
    null = pair.null_vector()
    overlap = np.abs(null @ vecs)
    snap = (overlap > 1.0 - 1e-8) & (np.abs(vals) <= 1e-8 * max(1.0, abs(vals).max()))
    vals = np.where(snap, 0.0, vals)
    if vals.min() < -NEG_TOL:
        raise NoConvergence(f"negative Ritz value {vals.min():.3g}")
    return vals, vecs


def solve_fibered_spectrum(pair: DiscreteOperatorPair, h: float, count: int, *,
                           tol: float = RESID_TOL, keep_vectors: bool = True) -> SpectrumSample:
    vals, vecs = fibered_eigenpairs(pair, h, count, tol=tol)
    vals = np.clip(vals, 0.0, None)
    atoms, mult = merge_atoms(vals)
    return SpectrumSample(h, FUNCTIONS, atoms, mult.astype(np.int64), float(vals.max()),
                          complete=False, n_converged=int(vals.size),
                          vectors=vecs if keep_vectors else None, raw_values=vals)


def counting_function(sample: SpectrumSample) -> CountingFunction:
    """N_h(λ) = #{λ_i ≤ λ} as a Stieltjes function (closed inequality)."""
    return CountingFunction(sample.eigenvalues, sample.multiplicities.astype(np.float64),
                            tau_max=sample.lambda_max)


# -- trace functionals --------------------------------------------------------

class TestFunction:
    """Scalar spectral test function with known support / decay.

    ``support`` is ``(lo, hi)``; ``hi`` may be infinite when ``decay`` (an
    exponential rate) is positive.  ``breakpoints`` are points where the
    function is not smooth, used to split quadratures.
    """

    support = (-math.inf, math.inf)
    decay = 0.0
    breakpoints: tuple = ()

    def __call__(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def scalar(self, x: float) -> float:
        """Pure-float evaluation, used inside quadrature loops."""
        return float(self(x))


class Gaussian(TestFunction):
    """``exp(-t λ)``, the heat-kernel test function."""

    def __init__(self, t: float):
        if t <= 0:
            raise ValueError("t must be positive")
        self.t = float(t)
        self.decay = self.t

    def __call__(self, x):
        return np.exp(-self.t * np.asarray(x, dtype=np.float64))

    def scalar(self, x):
        return math.exp(-self.t * x)

    def __repr__(self):
        return f"Gaussian(t={self.t})"


class RaisedCosineBump(TestFunction):
    def __init__(self, alpha: float, beta: float):
        if not beta > alpha:
            raise ValueError("bump needs alpha < beta")
        self.alpha, self.beta = float(alpha), float(beta)
        self.support = (self.alpha, self.beta)
        self.breakpoints = (self.alpha, self.beta)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        u = (x - self.alpha) / (self.beta - self.alpha)
        inside = (u > 0) & (u < 1)
        return np.where(inside, 0.5 * (1.0 - np.cos(2.0 * np.pi * u)), 0.0)

    def scalar(self, x):
        u = (x - self.alpha) / (self.beta - self.alpha)
        return 0.5 * (1.0 - math.cos(2.0 * math.pi * u)) if 0.0 < u < 1.0 else 0.0

    def __repr__(self):
        return f"RaisedCosineBump({self.alpha}, {self.beta})"


class SmoothedIndicator(TestFunction):
    """1 on (-∞, λ], cosine ramp down to 0 on [λ, λ + width]."""

    def __init__(self, lam: float, width: float):
        if width < 0:
            raise ValueError("width must be >= 0")
        self.lam, self.width = float(lam), float(width)
        self.support = (-math.inf, self.lam + self.width)
        self.breakpoints = (self.lam, self.lam + self.width) if width > 0 else (self.lam,)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.width == 0:
            return np.where(x <= self.lam, 1.0, 0.0)
        u = np.clip((x - self.lam) / self.width, 0.0, 1.0)
        return np.where(x <= self.lam, 1.0, 0.5 * (1.0 + np.cos(np.pi * u)))

    def scalar(self, x):
        if x <= self.lam:
            return 1.0
        if x >= self.lam + self.width:
            return 0.0
        return 0.5 * (1.0 + math.cos(math.pi * (x - self.lam) / self.width))

    def __repr__(self):
        return f"SmoothedIndicator({self.lam}, width={self.width})"


def _tail_warning(sample, rate, total, what):
    if not math.isfinite(sample.lambda_max):
        return
    tail = math.exp(-rate * sample.lambda_max)
    if tail > TAIL_RTOL * abs(total):
        warnings.warn(f"{what}: exp(-{rate:g}*{sample.lambda_max:g}) = {tail:.3g} is not "
                      f"negligible against {total:.6g}", TailNotNegligible, stacklevel=3)


def heat_trace(sample: SpectrumSample, t: float) -> float:
    """Σ m_i exp(-t λ_i)."""
    if t <= 0:
        raise ValueError("t must be positive")
    total = float(np.sum(sample.multiplicities * np.exp(-t * sample.eigenvalues)))
    _tail_warning(sample, t, total, "heat trace")
    return total


def trace_of_function(sample: SpectrumSample, f: TestFunction) -> float:
    """Σ m_i f(λ_i) for a decaying or compactly supported ``f``."""
    hi = f.support[1]
    if math.isfinite(hi):
        if hi > sample.lambda_max:
            raise UnsupportedTail(f"{f!r} is supported beyond lambda_max={sample.lambda_max}")
    elif f.decay <= 0:
        raise UnsupportedTail(f"{f!r} neither decays nor has bounded support")
    total = float(np.sum(sample.multiplicities * f(sample.eigenvalues)))
    if not math.isfinite(hi):
        _tail_warning(sample, f.decay, total, repr(f))
    return total
