"""Tangential / transverse Laplacians and the rescaled operator L_h = Δ_F + h²Δ_H.

On a flat linear foliation every Fourier mode ``exp(2πi k·x)`` (tensored with
a constant form of bigrade (i, j)) is an eigenvector, with tangential energy
``eF = |2πUk|²`` and transverse energy ``eH = |2πWk|²``.  The mean-curvature
and second-fundamental-form corrections of the general decomposition vanish
identically for constant orthonormal frames, so ``L_h`` acts by
``eF + h²·eH``.

On the fibered 2-torus only functions are handled; Δ_F and Δ_H are assembled
as sparse flux-form finite differences and symmetrized by the similarity
``u -> (ab)^{1/4} u``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ._kernels import FOUR_PI_SQ
from .errors import SingularWeight
from .models import Bigrade, FiberedTorusModel, FlatLinearFoliation, FUNCTIONS

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class ModeSymbol:
    """Per-mode symbol of Δ_F and Δ_H on a flat model and bigrade."""

    model: FlatLinearFoliation
    grade: Bigrade = FUNCTIONS

    def __post_init__(self):
        self.grade.check(self.model.p, self.model.q)

    @property
    def multiplicity(self) -> int:
        return self.grade.multiplicity(self.model.p, self.model.q)

    def energies(self, k: Sequence[int]) -> tuple[float, float]:
        """``(eF, eH)`` for the lattice vector ``k``."""
        # loop order matches the enumeration kernels bit for bit
        k = [int(v) for v in k]
        if len(k) != self.model.n:
            raise ValueError(f"lattice vector must have {self.model.n} entries")
        U, W = self.model.U, self.model.W
        eF = 0.0
        for r in range(U.shape[0]):
            s = 0.0
            for i, ki in enumerate(k):
                s += float(U[r, i]) * ki
            eF += s * s
        eH = 0.0
        for r in range(W.shape[0]):
            s = 0.0
            for i, ki in enumerate(k):
                s += float(W[r, i]) * ki
            eH += s * s
        return FOUR_PI_SQ * eF, FOUR_PI_SQ * eH


def mode_eigenvalue(symbol: ModeSymbol, k: Sequence[int], h: float) -> float:
    """Eigenvalue ``eF + h²·eH`` of L_h on the mode ``k``."""
    if not 0.0 < h <= 1.0:
        raise ValueError(f"h must lie in (0, 1], got {h}")
    eF, eH = symbol.energies(k)
    return eF + h * h * eH


# -- discrete Sobolev norms and the crude Gårding check -----------------------

def _mode_table(model, coefficients: Mapping):
    sym = ModeSymbol(model)
    eF = np.empty(len(coefficients))
    eH = np.empty(len(coefficients))
    c2 = np.empty(len(coefficients))
    for m, (k, c) in enumerate(coefficients.items()):
        eF[m], eH[m] = sym.energies(k)
        c2[m] = abs(c) ** 2
    return eF, eH, c2


def sobolev_norm_sq(model: FlatLinearFoliation, coefficients: Mapping, s: float,
                    k: float) -> float:
    """Squared (s, k) norm of a trigonometric polynomial.

    ``coefficients`` maps lattice vectors to Fourier coefficients.  The
    weight is ``(1 + |ξ_F|² + |ξ_H|²)^s (1 + |ξ_F|²)^k`` with ``ξ_F = 2πUk``
    and ``ξ_H = 2πWk``.
    """
    if not coefficients:
        return 0.0
    eF, eH, c2 = _mode_table(model, coefficients)
    return float(np.sum((1.0 + eF + eH) ** s * (1.0 + eF) ** k * c2))


@dataclass(frozen=True)
class GardingReport:
    lhs: float
    rhs: float
    holds: bool


def check_crude_garding(model: FlatLinearFoliation, h: float, coefficients: Mapping,
                        C1: float = 0.5, C2: float = 0.5, C3: float = 1.0) -> GardingReport:
    """Compare (L_h u, u) with C1‖u‖²_{0,1} + C2 h²‖u‖²_{1,0} − C3‖u‖²."""
    if not 0.0 < h <= 1.0:
        raise ValueError(f"h must lie in (0, 1], got {h}")
    if not coefficients:
        return GardingReport(0.0, 0.0, True)
    eF, eH, c2 = _mode_table(model, coefficients)
    lhs = float(np.sum((eF + h * h * eH) * c2))
    rhs = (C1 * sobolev_norm_sq(model, coefficients, 0, 1)
           + C2 * h * h * sobolev_norm_sq(model, coefficients, 1, 0)
           - C3 * sobolev_norm_sq(model, coefficients, 0, 0))
    # rounding slack relative to the size of the terms
    slack = 1e-12 * float(np.sum((1.0 + eF + eH) * c2))
    return GardingReport(lhs, rhs, lhs >= rhs - slack)


# -- fibered model ------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteOperatorPair:
    """Symmetrized Δ_F (``A``) and Δ_H (``B``) on the fibered grid.

    Unknowns are ordered ``j*Nx + i`` (x fastest), so ``A`` is block diagonal
    with one Nx x Nx block per leaf.  ``sqrt_rho`` is (ab)^{1/4}; the
    physical eigenfunction is ``v / sqrt_rho``.  ``weight`` holds the
    Riemannian cell volumes √(ab)·ΔxΔy.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    sqrt_rho: np.ndarray
    weight: np.ndarray
    Nx: int
    Ny: int

    @property
    def size(self) -> int:
        return self.Nx * self.Ny

    def matrix(self, h: float) -> sp.csr_matrix:
        """``A + h²B``, the symmetrized L_h."""
        return (self.A + (h * h) * self.B).tocsr()

    def dmatrix_dh(self, h: float) -> sp.csr_matrix:
        return (2.0 * h) * self.B

    def null_vector(self) -> np.ndarray:
        v = self.sqrt_rho.copy()
        return v / np.linalg.norm(v)

    def flux_form(self, which: str = "A") -> sp.csr_matrix:
        """Unsymmetrized operator ρ^{-1/2} M ρ^{1/2} (rows sum to zero)."""
        M = self.A if which == "A" else self.B
        s = self.sqrt_rho
        return (sp.diags(1.0 / s) @ M @ sp.diags(s)).tocsr()

    def leaf_block(self, j: int) -> np.ndarray:
        """Dense Nx x Nx block of ``A`` for the leaf ``y = j/Ny``."""
        lo = j * self.Nx
        return self.A[lo:lo + self.Nx, lo:lo + self.Nx].toarray()


def _axis_terms(kappa, s, d, axis):
    """Off-diagonal couplings and diagonal of -(1/ρ)∂(κ∂) along ``axis``."""
    kap_face = 0.5 * (kappa + np.roll(kappa, -1, axis=axis))
    s_next = np.roll(s, -1, axis=axis)
    off = -kap_face / (d * d * s * s_next)
    diag = (kap_face + np.roll(kap_face, 1, axis=axis)) / (d * d * s * s)
    return kap_face, off, diag


def _assemble(kappa, s, d, axis, Nx, Ny):
    kap_face, off, diag = _axis_terms(kappa, s, d, axis)
    if np.any(kap_face <= 0):
        raise ValueError("face conductance must be positive")
    J, I = np.meshgrid(np.arange(Ny), np.arange(Nx), indexing="ij")
    here = (J * Nx + I).ravel()
    if axis == 1:
        nbr = (J * Nx + (I + 1) % Nx).ravel()
    else:
        nbr = (((J + 1) % Ny) * Nx + I).ravel()
    N = Nx * Ny
    rows = np.concatenate([here, here, nbr])
    cols = np.concatenate([here, nbr, here])
    vals = np.concatenate([diag.ravel(), off.ravel(), off.ravel()])
    return sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()


def assemble_fibered_operators(model: FiberedTorusModel) -> DiscreteOperatorPair:
    """Flux-form second-order discretization of Δ_F and Δ_H.

    Δ_F u = −(ab)^{-1/2} ∂_x((ab)^{1/2} a^{-1} ∂_x u) and likewise Δ_H with
    ``b`` and ``∂_y``.  Face conductances are arithmetic means of the nodal
    values.
    """
    a = model.a
    b = np.broadcast_to(model.b[:, None], a.shape)
    rho = np.sqrt(a * b)
    s = np.sqrt(rho)
    if not np.all(np.isfinite(s)) or s.min() <= np.finfo(float).tiny ** 0.5:
        raise SingularWeight("(ab)^(1/4) underflows on the grid")
    dx = 1.0 / model.Nx
    dy = 1.0 / model.Ny
    A = _assemble(rho / a, s, dx, 1, model.Nx, model.Ny)
    B = _assemble(rho / b, s, dy, 0, model.Nx, model.Ny)
    for name, M in (("A", A), ("B", B)):
        asym = abs(M - M.T).max() if M.nnz else 0.0
        if asym > SYMMETRY_TOL * max(1.0, abs(M).max()):
            raise AssertionError(f"{name} is not symmetric ({asym:.3g})")
    return DiscreteOperatorPair(A, B, s.ravel().copy(), (rho * dx * dy).ravel(),
                                model.Nx, model.Ny)
