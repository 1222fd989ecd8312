"""Foliated model manifolds.

Two families are supported:

* :class:`FlatLinearFoliation` -- the unit torus R^n / Z^n foliated by the
  translates of a p-dimensional subspace F, with the flat metric split as
  g_F + g_H along F and its orthogonal complement H.  Spectra are exact.
* :class:`FiberedTorusModel` -- the unit 2-torus foliated by the circles
  ``y = const`` with the bundle-like metric ``a(x, y) dx^2 + b(y) dy^2``,
  sampled on a periodic grid.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (DegenerateSpan, HeuristicRationality, MixedRationality,
                     NonPositiveMetric, TransverseLeafDependence)
from .expr import Expression

ORTHO_TOL = 1e-12


class Rationality(str, enum.Enum):
    FIBRATION = "Fibration"
    DENSE_LEAVES = "DenseLeaves"
    MIXED = "Mixed"


@dataclass(frozen=True)
class Bigrade:
    """Form bigrade: tangential degree ``i``, transverse degree ``j``."""

    i: int = 0
    j: int = 0

    @property
    def k(self) -> int:
        return self.i + self.j

    def check(self, p: int, q: int) -> "Bigrade":
        if not (0 <= self.i <= p and 0 <= self.j <= q):
            raise ValueError(f"bigrade ({self.i},{self.j}) outside 0..{p} x 0..{q}")
        return self

    def multiplicity(self, p: int, q: int) -> int:
        """Rank of the bundle Λ^i F* ⊗ Λ^j H*."""
        self.check(p, q)
        return math.comb(p, self.i) * math.comb(q, self.j)

    def __str__(self):
        return f"({self.i},{self.j})"


FUNCTIONS = Bigrade(0, 0)


def bigrades_of_degree(k: int, p: int, q: int):
    return [Bigrade(i, k - i) for i in range(max(0, k - q), min(p, k) + 1)]


# -- exact arithmetic helpers -------------------------------------------------

def _as_exact(value, denominator_bound):
    """Return a Fraction when ``value`` is exactly rational, else a float."""
    if isinstance(value, bool):
        raise TypeError("boolean span entry")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            return float(Expression(value)())
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"non-finite span entry {value!r}")
    fr = Fraction(v).limit_denominator(denominator_bound)
    return fr if float(fr) == v else v


def _integer_row(fracs):
    den = 1
    for f in fracs:
        den = den * f.denominator // math.gcd(den, f.denominator)
    ints = [int(f * den) for f in fracs]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    return [v // g for v in ints] if g else ints


def _rational_nullspace(rows, n):
    """Basis of {v in Q^n : rows . v = 0} via exact row reduction."""
    A = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n
        v[fc] = Fraction(1)
        for row_i, pc in enumerate(pivots):
            v[pc] = -A[row_i][fc]
        basis.append(v)
    return basis


def integer_kernel(rows, n):
    """Z-basis of {k in Z^n : rows . k = 0} by unimodular column reduction."""
    A = [list(map(int, r)) for r in rows]
    V = [[int(i == j) for j in range(n)] for i in range(n)]  # V[i][c]: column c

    def colop(dst, src, q):
        for row in A:
            row[dst] -= q * row[src]
        for row in V:
            row[dst] -= q * row[src]

    def swap(c1, c2):
        for row in A:
            row[c1], row[c2] = row[c2], row[c1]
        for row in V:
            row[c1], row[c2] = row[c2], row[c1]

    start = 0
    for row in A:
        if start >= n:
            break
        for c in range(start + 1, n):
            while row[c] != 0:
                colop(start, c, row[start] // row[c])
                swap(start, c)
        if row[start] != 0:
            start += 1
    return [[V[i][c] for i in range(n)] for c in range(start, n)]


def _normalize_lattice(basis):
    out = []
    for v in basis:
        lead = next((x for x in v if x != 0), 0)
        out.append(tuple(-x for x in v) if lead < 0 else tuple(v))
    return tuple(out)


def saturate(int_span, n):
    """Z-basis of span_Q(int_span) ∩ Z^n."""
    rows = [[Fraction(v) for v in r] for r in int_span]
    comp = [_integer_row(v) for v in _rational_nullspace(rows, n)]
    if not comp:
        return tuple(tuple(int(i == j) for j in range(n)) for i in range(n))
    return _normalize_lattice(integer_kernel(comp, n))


# -- flat model ---------------------------------------------------------------

def _mgs(vectors, tol=1e-10):
    """Modified Gram-Schmidt with one re-orthogonalization pass."""
    basis = []
    for v in vectors:
        w = np.array(v, dtype=np.float64)
        scale = np.linalg.norm(w)
        for _ in range(2):
            for b in basis:
                if b is not None:
                    w = w - (b @ w) * b
        nrm = np.linalg.norm(w)
        if scale == 0.0 or nrm <= tol * scale:
            basis.append(None)
            continue
        basis.append(w / nrm)
    return basis


@dataclass(frozen=True)
class RationalityReport:
    kind: Rationality
    lattice: Optional[tuple] = None
    heuristic: bool = False


def detect_rationality(U, spans=None, *, search_box: int = 12,
                       denominator_bound: int = 10**6) -> RationalityReport:
    """Classify the rank of the lattice F ∩ Z^n, F the row space of ``U``.

    When ``spans`` (the vectors ``U`` was built from) are all exactly
    rational, the answer is exact and comes with a Z-basis of the leaf
    lattice.  Otherwise integer vectors of F are searched for in the box
    ``|k_i| <= search_box``; the result carries ``heuristic=True``.
    """
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    p, n = U.shape
    source = spans if spans is not None else U.tolist()
    exact = [[_as_exact(v, denominator_bound) for v in row] for row in source]
    if all(isinstance(v, Fraction) for row in exact for v in row):
        ints = [_integer_row(row) for row in exact]
        return RationalityReport(Rationality.FIBRATION, saturate(ints, n), False)

    # bounded search for integer vectors lying in F
    W = _complement(U)
    side = np.arange(-search_box, search_box + 1)
    grid = np.array(list(itertools.product(side, repeat=n)), dtype=np.int64)
    grid = grid[np.any(grid != 0, axis=1)]
    resid = np.linalg.norm(grid @ W.T, axis=1) if W.size else np.zeros(len(grid))
    found = grid[resid <= 1e-9 * np.linalg.norm(grid, axis=1)]
    rank = int(np.linalg.matrix_rank(found.astype(float))) if len(found) else 0
    if rank == 0:
        return RationalityReport(Rationality.DENSE_LEAVES, None, True)
    if rank < p:
        return RationalityReport(Rationality.MIXED, None, True)
    chosen = []
    for v in found[np.argsort(np.abs(found).sum(axis=1), kind="stable")]:
        trial = chosen + [v]
        if np.linalg.matrix_rank(np.array(trial, dtype=float)) == len(trial):
            chosen = trial
        if len(chosen) == p:
            break
    return RationalityReport(Rationality.FIBRATION,
                             saturate([list(map(int, c)) for c in chosen], n), True)


def _complement(U):
    p, n = U.shape
    basis = [b for b in _mgs(list(U) + list(np.eye(n)))[p:] if b is not None]
    W = np.array(basis[: n - p]).reshape(n - p, n)
    if W.shape[0] and np.linalg.det(np.vstack([U, W])) < 0:
        W[-1] = -W[-1]
    return W


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FlatLinearFoliation:
    """Linear foliation of the flat unit torus T^n by p-dimensional leaves.

    ``U`` (p x n) and ``W`` (q x n) hold orthonormal bases of the tangential
    subspace F and of H = F^⊥.  ``leaf_lattice`` is a Z-basis of F ∩ Z^n
    for fibrations (the leaves are then compact tori), ``None`` otherwise.
    """

    U: np.ndarray
    W: np.ndarray
    rationality: Rationality
    leaf_lattice: Optional[tuple] = None
    heuristic: bool = False
    name: str = "flat"

    def __post_init__(self):
        object.__setattr__(self, "U", _frozen(np.atleast_2d(self.U)))
        object.__setattr__(self, "W", _frozen(np.atleast_2d(self.W)))
        U, W = self.U, self.W
        if U.shape[1] != W.shape[1] or U.shape[0] + W.shape[0] != U.shape[1]:
            raise ValueError("frame shapes do not split R^n")
        n = U.shape[1]
        errs = (np.abs(U @ U.T - np.eye(self.p)).max(),
                np.abs(W @ W.T - np.eye(self.q)).max(),
                np.abs(U @ W.T).max(),
                np.abs(U.T @ U + W.T @ W - np.eye(n)).max())
        if max(errs) > ORTHO_TOL:
            raise ValueError(f"frames are not orthonormal (max defect {max(errs):.3g})")
        if self.rationality is Rationality.MIXED:
            raise MixedRationality("F ∩ Z^n has rank strictly between 0 and p")

    @property
    def n(self) -> int:
        return self.U.shape[1]

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def q(self) -> int:
        return self.W.shape[0]

    @property
    def volume(self) -> float:
        return 1.0

    @property
    def projector(self) -> np.ndarray:
        """Orthogonal projector onto F."""
        return self.U.T @ self.U

    def leaf_gram(self) -> np.ndarray:
        """Gram matrix of the leaf lattice basis (fibrations only)."""
        if self.leaf_lattice is None:
            raise ValueError("leaves are not compact")
        L = np.array(self.leaf_lattice, dtype=np.float64)
        return L @ L.T

    def leaf_volume(self) -> float:
        return math.sqrt(np.linalg.det(self.leaf_gram()))


def build_flat_model(n: int, p: int, spans: Sequence[Sequence], *,
                     name: str = "flat", search_box: int = 12,
                     denominator_bound: int = 10**6) -> FlatLinearFoliation:
    """Orthonormalize ``spans`` into the tangential frame and classify leaves.

    Span entries may be ints, Fractions, floats, or strings (``"1/3"``,
    ``"sqrt(2)"``); exact rational input gives exact rationality detection.
    """
    if not (n >= 2 and 1 <= p < n):
        raise ValueError(f"need n >= 2 and 1 <= p < n, got n={n}, p={p}")
    if len(spans) != p or any(len(v) != n for v in spans):
        raise ValueError(f"expected {p} spanning vectors of length {n}")
    exact = [[_as_exact(v, denominator_bound) for v in row] for row in spans]
    numeric = [[float(v) for v in row] for row in exact]
    frame = _mgs(numeric)
    if any(b is None for b in frame):
        raise DegenerateSpan(f"spanning vectors have rank < {p}")
    U = np.array(frame)
    W = _complement(U)
    report = detect_rationality(U, exact, search_box=search_box,
                                denominator_bound=denominator_bound)
    if report.kind is Rationality.MIXED:
        raise MixedRationality(f"F ∩ Z^{n} has rank strictly between 0 and {p}")
    if report.heuristic:
        warnings.warn(f"{name}: rationality {report.kind.value} decided by bounded "
                      f"search (|k_i| <= {search_box})", HeuristicRationality, stacklevel=2)
    return FlatLinearFoliation(U, W, report.kind, report.lattice, report.heuristic, name)


# -- fibered model ------------------------------------------------------------

Coefficient = Union[str, float, int, Callable]


def _sample(expr, X, Y):
    if callable(expr) and not isinstance(expr, Expression):
        out = np.asarray(expr(X, Y), dtype=np.float64)
        return np.broadcast_to(out, X.shape).copy()
    if not isinstance(expr, Expression):
        expr = Expression(expr)
    return expr(X, Y)


@dataclass(frozen=True)
class FiberedTorusModel:
    """Unit 2-torus foliated by circles ``y = const``.

    The metric is ``a(x, y) dx^2 + b(y) dy^2``.  ``a`` has shape (Ny, Nx)
    indexed ``[j, i]`` for the node ``(i/Nx, j/Ny)``; ``b`` has shape (Ny,).
    """

    Nx: int
    Ny: int
    a: np.ndarray
    b: np.ndarray
    a_source: str = ""
    b_source: str = ""
    name: str = "fibered"
    n: int = field(default=2, init=False)
    p: int = field(default=1, init=False)
    q: int = field(default=1, init=False)

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "b", _frozen(self.b))
        if self.a.shape != (self.Ny, self.Nx) or self.b.shape != (self.Ny,):
            raise ValueError("coefficient arrays do not match the grid")
        if not (np.all(self.a > 0) and np.all(np.isfinite(self.a))):
            raise NonPositiveMetric(f"a is not positive on the grid (min {self.a.min():.6g})")
        if not (np.all(self.b > 0) and np.all(np.isfinite(self.b))):
            raise NonPositiveMetric(f"b is not positive on the grid (min {self.b.min():.6g})")

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) / self.Nx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.Ny) / self.Ny


def build_fibered_model(Nx: int, Ny: int, a_expression: Coefficient,
                        b_expression: Coefficient, *, name: str = "fibered",
                        leaf_tol: float = 1e-14) -> FiberedTorusModel:
    if Nx < 3 or Ny < 3:
        raise ValueError("grid needs at least 3 nodes per direction")
    x = np.arange(Nx) / Nx
    y = np.arange(Ny) / Ny
    X, Y = np.meshgrid(x, y)
    a = _sample(a_expression, X, Y)
    b2 = _sample(b_expression, X, Y)
    if not np.all(np.isfinite(b2)):
        raise NonPositiveMetric("b is not finite on the grid")
    drift = np.abs(b2 - b2[:, :1]).max()
    if drift > leaf_tol:
        raise TransverseLeafDependence(
            f"b varies along leaves by {drift:.3g} (bundle-like metric needs b = b(y))")
    return FiberedTorusModel(Nx, Ny, a, b2[:, 0].copy(), str(getattr(a_expression, "source", a_expression)),
                             str(getattr(b_expression, "source", b_expression)), name)
