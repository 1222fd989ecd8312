"""Leafwise spectrum distribution function N_F of the tangential Laplacian.

N_F(λ) integrates, over the manifold, the diagonal of the spectral
projector of the leaf Laplacians onto (-∞, λ].  All supported models have
trivial holonomy, so the holonomy covering of a leaf is the leaf itself.

* dense leaves (≅ R^p): translation invariance gives
  ``N_F(λ) = vol(M) (2π)^{-p} ω_p λ^{p/2}`` per form component;
* compact leaves: integrating over one leaf yields its counting function,
  weighted by the transverse volume ``vol(M)/vol(leaf)``; on the fibered
  2-torus that weight is ``√b(y) dy``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .models import (Bigrade, FiberedTorusModel, FlatLinearFoliation, FUNCTIONS,
                     Rationality)
from .operators import assemble_fibered_operators
from .spectra import CountingFunction, merge_atoms

DEFAULT_TAU_MAX = 1.0e4


class LeafwiseKind(str, enum.Enum):
    CLOSED_FORM_DENSITY = "ClosedFormDensity"
    ATOMIC_FIBRATION = "AtomicFibration"
    NUMERICAL_FIBERED = "NumericalFibered"


@dataclass(frozen=True)
class LeafwiseDistribution:
    counting: CountingFunction
    kind: LeafwiseKind
    p: int
    q: int
    harmonic_mass: float
    grade_factor: int

    def __call__(self, lam):
        return self.counting(lam)

    @property
    def bottom(self) -> float:
        """Bottom of the leafwise spectrum."""
        return self.counting.bottom()

    def first_excited_atom(self, tol: float = 1e-9) -> float:
        pos = self.counting.atoms[self.counting.atoms > tol]
        return float(pos[0]) if pos.size else math.inf

    def to_rows(self):
        """``(tau, jump_or_density, kind)`` rows; the density row carries c and α."""
        rows = [(float(t), float(m), "atom") for t, m in
                zip(self.counting.atoms, self.counting.masses)]
        if self.counting.has_density:
            rows.append((self.counting.power_exp, self.counting.power_coef, "power_law"))
        return rows

    def manifest(self) -> dict:
        return {"kind": self.kind.value, "p": self.p, "q": self.q,
                "harmonic_mass": self.harmonic_mass, "grade_factor": self.grade_factor,
                "tau_max": self.counting.tau_max, "atoms": int(self.counting.atoms.size)}


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def leaf_lattice_atoms(model: FlatLinearFoliation, tau_max: float):
    """Eigenvalues |2πκ|² (κ in the dual leaf lattice) below ``tau_max``.

    Returns ``(atoms, counts)`` with the leaf-mode multiplicity in ``counts``.
    """
    G = model.leaf_gram()
    Ginv = np.linalg.inv(G)
    C = np.linalg.cholesky(Ginv).T  # |C m|² = mᵀ G⁻¹ m
    bound = int(math.ceil(math.sqrt(tau_max * np.linalg.eigvalsh(G).max()) / (2 * math.pi)))
    eF, _ = _kernels.box_collect(C, np.zeros((0, model.p)), 1.0, bound, tau_max)
    return merge_atoms(eF)


def leafwise_distribution_flat(model: FlatLinearFoliation, grade: Bigrade = FUNCTIONS,
                               tau_max: float = DEFAULT_TAU_MAX) -> LeafwiseDistribution:
    mult = grade.multiplicity(model.p, model.q)
    p = model.p
    if model.rationality is Rationality.DENSE_LEAVES:
        coef = mult * model.volume * (2 * math.pi) ** (-p) * unit_ball_volume(p)
        cf = CountingFunction(np.zeros(0), np.zeros(0), coef, p / 2)
        return LeafwiseDistribution(cf, LeafwiseKind.CLOSED_FORM_DENSITY, p, model.q, 0.0, mult)
    transverse = model.volume / model.leaf_volume()
    atoms, counts = leaf_lattice_atoms(model, tau_max)
    cf = CountingFunction(atoms, counts * (mult * transverse), tau_max=tau_max)
    return LeafwiseDistribution(cf, LeafwiseKind.ATOMIC_FIBRATION, p, model.q,
                                mult * transverse, mult)


def leafwise_distribution_fibered(model: FiberedTorusModel,
                                  y_quadrature_order: Optional[int] = None
                                  ) -> LeafwiseDistribution:
    """Weighted sum of per-leaf counting functions with weights √b(y)·Δy.

    ``y_quadrature_order`` is the number of equispaced leaves used (must
    divide Ny); the default uses every grid row.
    """
    order = model.Ny if y_quadrature_order is None else int(y_quadrature_order)
    if order < 1 or model.Ny % order:
        raise ValueError(f"y_quadrature_order must divide Ny={model.Ny}")
    rows = np.arange(0, model.Ny, model.Ny // order)
    pair = assemble_fibered_operators(model)
    blocks = np.stack([pair.leaf_block(j) for j in rows])
    s = pair.sqrt_rho.reshape(model.Ny, model.Nx)[rows]
    try:
        vals, vecs = np.linalg.eigh(blocks)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"leaf eigensolve failed: {exc}") from None
    for r, j in enumerate(rows):
        if not np.all(np.isfinite(vals[r])):
            raise np.linalg.LinAlgError(f"leaf eigensolve failed at y index {j}")
    # the leaf Laplacian annihilates constants: snap that mode to exactly 0
    null = s / np.linalg.norm(s, axis=1, keepdims=True)
    overlap = np.abs(np.einsum("ri,rik->rk", null, vecs))
    scale = np.maximum(1.0, np.abs(vals).max(axis=1, keepdims=True))
    vals = np.where((overlap > 1 - 1e-8) & (np.abs(vals) <= 1e-8 * scale), 0.0, vals)
    vals = np.clip(vals, 0.0, None)
    wy = np.sqrt(model.b[rows]) / order
    atoms, masses = merge_atoms(vals.ravel(), np.repeat(wy, model.Nx))
    tau_max = float(vals.max(axis=1).min())
    cf = CountingFunction(atoms, masses, tau_max=tau_max)
    return LeafwiseDistribution(cf, LeafwiseKind.NUMERICAL_FIBERED, 1, 1, float(wy.sum()), 1)
