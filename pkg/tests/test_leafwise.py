import math

import numpy as np
import pytest
from scipy import integrate

from adialab.leafwise import (LeafwiseKind, leafwise_distribution_fibered,
                              leafwise_distribution_flat)
from adialab.models import Bigrade, build_fibered_model, build_flat_model

FOUR_PI_SQ = 4 * math.pi ** 2


def segment_density(tau, L):
    """Modes of d²/dx² on a circle of length L below tau, per unit length."""
    M = math.floor(L * math.sqrt(tau) / (2 * math.pi))
    return (2 * M + 1) / L


def test_kronecker_closed_form(kronecker):
    NF = leafwise_distribution_flat(kronecker)
    assert NF.kind is LeafwiseKind.CLOSED_FORM_DENSITY
    tau = np.linspace(0, 1e4, 1001)
    np.testing.assert_allclose(NF(tau), np.sqrt(tau) / math.pi, rtol=1e-12, atol=0)
    assert NF(0.0) == 0.0 and NF.harmonic_mass == 0.0
    # box-limit oracle: long circles approach the line
    for t in (1.0, 100.0, 2500.0):
        assert segment_density(t, 1e6) == pytest.approx(math.sqrt(t) / math.pi, rel=1e-4)
        assert NF(t) == pytest.approx(math.sqrt(t) / math.pi, rel=1e-15)


def test_axis_atoms(axis):
    NF = leafwise_distribution_flat(axis, tau_max=200.0)
    assert NF.kind is LeafwiseKind.ATOMIC_FIBRATION
    np.testing.assert_allclose(NF.counting.atoms, [0, FOUR_PI_SQ, 4 * FOUR_PI_SQ], rtol=1e-15)
    assert NF.counting.masses.tolist() == [1.0, 2.0, 2.0]
    assert NF(0.0) == NF.harmonic_mass == 1.0


def test_slanted_fibration_volume():
    m = build_flat_model(2, 1, [[1, 1]])
    NF = leafwise_distribution_flat(m, tau_max=100.0)
    # leaves of length √2: eigenvalues 2π²m², transverse weight 1/√2
    np.testing.assert_allclose(NF.counting.atoms, [0, 2 * math.pi ** 2, 8 * math.pi ** 2],
                               rtol=1e-14)
    np.testing.assert_allclose(NF.counting.masses, [1, 2, 2] / np.sqrt(2), rtol=1e-14)


def test_top_bigrade_factor_one(axis):
    a = leafwise_distribution_flat(axis, tau_max=300.0)
    b = leafwise_distribution_flat(axis, Bigrade(1, 1), tau_max=300.0)
    np.testing.assert_array_equal(a.counting.masses, b.counting.masses)


def test_form_factor_three_torus():
    m = build_flat_model(3, 2, [[1, 0, 0], [0, 1, 0]])
    f = leafwise_distribution_flat(m, tau_max=100.0)
    g = leafwise_distribution_flat(m, Bigrade(1, 0), tau_max=100.0)
    np.testing.assert_allclose(g.counting.masses, 2 * f.counting.masses)
    # 2-torus leaves: atoms 0, 4π² (×4), 8π² (×4)
    assert f.counting.masses.tolist() == [1.0, 4.0, 4.0]


def test_fibered_flat_matches_axis_at_discrete_level():
    N = 32
    NF = leafwise_distribution_fibered(build_fibered_model(N, N, "1", "1"))
    m = np.arange(N)
    mu = (2 * N * np.sin(np.pi * m / N)) ** 2
    atoms, counts = np.unique(np.round(mu, 9), return_counts=True)
    np.testing.assert_allclose(NF.counting.atoms, atoms, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(NF.counting.masses, counts, rtol=1e-12)


def test_fibered_flat_matches_axis_kind(axis):
    # below the discretization-trust bound the two kinds agree on every λ
    # lying between atoms of both
    N = 256
    fib = leafwise_distribution_fibered(build_fibered_model(N, N, "1", "1"))
    flat = leafwise_distribution_flat(axis, tau_max=1e3)
    lams = np.array([10.0, 100.0, 200.0, 300.0])
    np.testing.assert_allclose(fib(lams), flat(lams), rtol=1e-10)


def test_constant_b_scales_mass():
    base = leafwise_distribution_fibered(build_fibered_model(16, 16, "1", "1"))
    four = leafwise_distribution_fibered(build_fibered_model(16, 16, "1", "4"))
    assert four.harmonic_mass == pytest.approx(2.0, rel=1e-14)
    np.testing.assert_allclose(four.counting.masses, 2 * base.counting.masses, rtol=1e-14)


def test_doubling_b_scales_by_sqrt2():
    a = "1 + 0.3*cos(2*pi*x)*cos(2*pi*y)"
    one = leafwise_distribution_fibered(build_fibered_model(16, 16, a, "1 + 0.5*sin(2*pi*y)^2"))
    two = leafwise_distribution_fibered(build_fibered_model(16, 16, a, "2 + sin(2*pi*y)^2"))
    lams = np.linspace(0, one.counting.tau_max, 50)
    np.testing.assert_allclose(two(lams), math.sqrt(2) * one(lams), rtol=1e-12)


def test_varying_leaf_metric_keeps_zero_bottom(fibered16):
    NF = leafwise_distribution_fibered(fibered16)
    assert NF.bottom == 0.0
    # harmonic mass is the periodic trapezoid rule for ∫ √b(y) dy
    exact, _ = integrate.quad(lambda y: math.sqrt(1 + 0.5 * math.sin(2 * math.pi * y) ** 2),
                              0, 1, epsabs=1e-14)
    assert NF(0.0) == pytest.approx(exact, rel=1e-8)
    assert NF.harmonic_mass == pytest.approx(NF(0.0), rel=1e-14)


def test_quadrature_order(fibered16):
    coarse = leafwise_distribution_fibered(fibered16, y_quadrature_order=8)
    assert coarse.harmonic_mass == pytest.approx(
        leafwise_distribution_fibered(fibered16).harmonic_mass, rel=1e-4)
    with pytest.raises(ValueError):
        leafwise_distribution_fibered(fibered16, y_quadrature_order=5)


def test_rows(axis):
    rows = leafwise_distribution_flat(axis, tau_max=50).to_rows()
    assert rows[0] == (0.0, 1.0, "atom")
    assert leafwise_distribution_flat(build_flat_model(2, 1, [[1, 0]])).manifest()["kind"] == \
        "AtomicFibration"
