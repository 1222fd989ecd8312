import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adialab.adiabatic import (NEG_INFINITY, estimate_r_exponent, limit_summary, rhs_counting,
                               rhs_heat, rhs_trace_of_function, run_sweep, track_branches)
from adialab.errors import InsufficientData
from adialab.leafwise import leafwise_distribution_fibered, leafwise_distribution_flat
from adialab.models import FUNCTIONS, build_fibered_model
from adialab.operators import assemble_fibered_operators
from adialab.spectra import Gaussian, RaisedCosineBump, SmoothedIndicator, count_modes

FOUR_PI_SQ = 4 * math.pi ** 2


def axis_oracle(lam):
    M = int(math.floor(math.sqrt(max(lam, 0)) / (2 * math.pi)))
    return sum(math.sqrt(lam - (2 * math.pi * m) ** 2) for m in range(-M, M + 1)
               if (2 * math.pi * m) ** 2 <= lam) / math.pi


@pytest.fixture(scope="module")
def NF_kron(kronecker):
    return leafwise_distribution_flat(kronecker)


@pytest.fixture(scope="module")
def NF_axis(axis):
    return leafwise_distribution_flat(axis)


# -- right-hand sides ---------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 10.0, 100.0, 1234.5])
def test_rhs_counting_kronecker_weyl(NF_kron, lam):
    # Weyl coefficient of T² with the h = 1 metric: λ/(4π)
    assert rhs_counting(NF_kron, lam, 1) == pytest.approx(lam / (4 * math.pi), rel=1e-10)


def test_rhs_counting_negative(NF_kron, NF_axis):
    assert rhs_counting(NF_kron, -1.0, 1) == 0.0
    assert rhs_counting(NF_axis, -1.0, 1) == 0.0


@pytest.mark.parametrize("lam", [1.0, 20.0, FOUR_PI_SQ, 100.0, 500.0])
def test_rhs_counting_axis_atomic(NF_axis, lam):
    assert rhs_counting(NF_axis, lam, 1) == pytest.approx(axis_oracle(lam), rel=1e-12)


def test_rhs_counting_beyond_trust(axis):
    NF = leafwise_distribution_flat(axis, tau_max=50.0)
    with pytest.raises(ValueError):
        rhs_counting(NF, 100.0, 1)


def test_rhs_heat_kronecker(NF_kron):
    for t in (0.1, 0.5, 2.0):
        for h in (1.0, 0.1):
            assert rhs_heat(NF_kron, t, h, 1) == pytest.approx(1 / (4 * math.pi * t * h), rel=1e-12)
    assert rhs_heat(NF_kron, 1.0, 0.1, 1) == pytest.approx(2 * rhs_heat(NF_kron, 2.0, 0.1, 1))


def test_rhs_heat_large_t_fibration(NF_axis):
    t = 50.0
    assert rhs_heat(NF_axis, t, 0.2, 1) == pytest.approx(
        (4 * math.pi * t) ** -0.5 / 0.2 * NF_axis.harmonic_mass, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 3.0))
def test_gaussian_consistency(NF_kron, NF_axis, t):
    for NF in (NF_kron, NF_axis):
        a = rhs_trace_of_function(NF, Gaussian(t), 1)
        assert a == pytest.approx(rhs_heat(NF, t, 1.0, 1), rel=1e-8)


def test_trace_rhs_kronecker_exact(NF_kron):
    # RHS measure is dλ/(4π) on the Kronecker torus
    f = SmoothedIndicator(50.0, 8.0)
    assert rhs_trace_of_function(NF_kron, f, 1) == pytest.approx(54.0 / (4 * math.pi), rel=1e-9)
    b = RaisedCosineBump(3.0, 40.0)
    assert rhs_trace_of_function(NF_kron, b, 1) == pytest.approx(18.5 / (4 * math.pi), rel=1e-9)


def test_trace_rhs_negative_support(NF_kron, NF_axis):
    for NF in (NF_kron, NF_axis):
        assert rhs_trace_of_function(NF, RaisedCosineBump(-2, -1), 1) == 0.0


def test_indicator_limit(NF_axis):
    lam = 60.0
    target = rhs_counting(NF_axis, lam, 1)
    for w, tol in ((1e-2, 1e-2), (1e-4, 1e-4)):
        got = rhs_trace_of_function(NF_axis, SmoothedIndicator(lam, w), 1)
        assert abs(got - target) <= tol * target


# -- exponent estimator -------------------------------------------------------

def test_exponent_examples(kronecker):
    hs = [0.2, 0.1, 0.05, 0.025]
    assert estimate_r_exponent([1, 1, 1, 1], hs).r == pytest.approx(0.0, abs=1e-12)
    counts = [int(count_modes(kronecker, FUNCTIONS, h, [10.0])[0]) for h in hs]
    fit = estimate_r_exponent(counts, hs, 1)
    assert counts == [3, 7, 17, 31]
    # ledger: this four-point fit gives 1.139, just outside [0.9, 1.1]
    assert fit.r == pytest.approx(1.1387, abs=1e-4)
    assert fit.within_bracket
    assert estimate_r_exponent([0, 0, 0, 0], hs).r == NEG_INFINITY


def test_exponent_insufficient():
    with pytest.raises(InsufficientData):
        estimate_r_exponent([5, 10], [0.1, 0.05])
    with pytest.raises(InsufficientData):
        estimate_r_exponent([0, 0, 3, 6], [0.4, 0.2, 0.1, 0.05])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.1, 1e3), st.integers(3, 8))
def test_exponent_recovers_power_law(r, c, n):
    hs = 0.5 ** np.arange(1, n + 1)
    fit = estimate_r_exponent(c * hs ** -r, hs)
    assert fit.r == pytest.approx(r, abs=1e-9)
    assert fit.residual <= 1e-9


# -- sweeps -------------------------------------------------------------------

def test_sweep_kronecker(kronecker):
    rep = run_sweep(kronecker, FUNCTIONS, [0.1, 0.05, 0.025], [-1.0, 10.0, 100.0])
    assert 0.97 <= rep.ratio[-1, 2] <= 1.03
    assert rep.lhs[:, 0].tolist() == [0, 0, 0] and rep.rhs[0] == 0
    assert np.all(np.isnan(rep.ratio[:, 0]))
    assert not rep.flagged.any()
    s = rep.summary()
    assert s["exponents"][0]["r"] == NEG_INFINITY
    assert s["pass"]["no_flagged_cells"]


def test_sweep_axis_below_first_atom(axis):
    lam = 30.0
    rep = run_sweep(axis, FUNCTIONS, [0.1, 0.01, 0.001], [lam])
    assert rep.rhs[0] == pytest.approx(math.sqrt(lam) / math.pi, rel=1e-14)
    err = np.abs(rep.ratio[:, 0] - 1)
    assert err[-1] < err[0] and err[-1] <= 2e-3


def test_sweep_workers_identical(kronecker):
    a = run_sweep(kronecker, FUNCTIONS, [0.2, 0.1, 0.05, 0.025], [10.0, 50.0, 100.0])
    b = run_sweep(kronecker, FUNCTIONS, [0.2, 0.1, 0.05, 0.025], [10.0, 50.0, 100.0], workers=4)
    np.testing.assert_array_equal(a.lhs, b.lhs)
    assert a.summary() == b.summary()


def test_sweep_budget_marks_missing(kronecker):
    rep = run_sweep(kronecker, FUNCTIONS, [0.5, 0.1, 0.001], [10.0, 1000.0], budget=2 * 10**6)
    assert rep.missing[2].tolist() == [False, True]
    assert rep.notes


def test_sweep_fibered(fibered16):
    rep = run_sweep(fibered16, FUNCTIONS, [1.0, 0.5, 0.25], [5.0, 40.0])
    assert not rep.flagged.any() and not rep.missing.any()
    assert rep.lhs[0, 0] == 1


def test_sweep_schedule_checks(kronecker):
    with pytest.raises(ValueError):
        run_sweep(kronecker, FUNCTIONS, [0.1, 0.2], [1.0])
    with pytest.raises(ValueError):
        run_sweep(kronecker, FUNCTIONS, [1.5, 0.1], [1.0])


# -- branches -----------------------------------------------------------------

def test_flat_branches(axis):
    hs = np.array([1.0, 0.5, 0.2, 0.1])
    br = track_branches(axis, hs, 4)
    trans = next(b for b in br if b.leaf_energy == 0 and b.transverse_energy > 0)
    np.testing.assert_allclose(trans.values, FOUR_PI_SQ * hs ** 2, rtol=1e-14)
    assert trans.limit_estimate == 0.0
    leaf = next(b for b in track_branches(axis, hs, 4, exclude_leaf_harmonic=True)
                if b.transverse_energy == 0)
    assert np.all(leaf.values == leaf.values[0])
    assert leaf.values[0] == pytest.approx(FOUR_PI_SQ, rel=1e-15)
    # nonuniform stencil weights cancel only up to rounding
    assert np.abs(leaf.derivative).max() <= 1e-12 * FOUR_PI_SQ
    for b in br:
        assert b.fit_residual <= 1e-10
        np.testing.assert_allclose(b.derivative[1:-1], b.hf[1:-1], rtol=1e-9, atol=1e-12)


def test_branches_monotone_in_h(fibered16):
    br = track_branches(fibered16, [1.0, 0.7, 0.5, 0.3, 0.2, 0.1], 6)
    for b in br:
        assert not b.truncated
        assert np.all(np.diff(b.values) <= 1e-9 * np.maximum(1, b.values[:-1]))
        assert np.all(b.hf >= -1e-10)


def test_hellmann_feynman_flat_grid():
    pair = assemble_fibered_operators(build_fibered_model(32, 32, "1", "1"))
    step = 1e-4
    br = track_branches(pair, [0.5 + step, 0.5, 0.5 - step], 5)
    for b in br:
        fd = (b.values[0] - b.values[2]) / (2 * step)
        assert abs(fd - b.hf[1]) <= 1e-3 * max(abs(b.hf[1]), 1.0)


def test_limit_summary_all_models(kronecker, axis, fibered16):
    hs = [1.0, 0.5, 0.25, 0.1]
    for model, NF in ((kronecker, leafwise_distribution_flat(kronecker)),
                      (axis, leafwise_distribution_flat(axis)),
                      (fibered16, leafwise_distribution_fibered(fibered16))):
        s = limit_summary(track_branches(model, hs, 4), NF)
        assert s.lambda_lim_0 == 0.0 and s.lambda_F0 == 0.0 and s.ordering_ok


def test_limit_summary_leaf_only(axis):
    br = track_branches(axis, [1.0, 0.5, 0.1], 3, exclude_leaf_harmonic=True)
    s = limit_summary(br, leafwise_distribution_flat(axis), leaf_only=True)
    assert s.lambda_lim_0 == pytest.approx(FOUR_PI_SQ, abs=1e-9) and s.matches_leaf


def test_limit_summary_fibered_flat_grid(axis):
    N = 64
    m = build_fibered_model(N, N, "1", "1")
    br = track_branches(m, [1.0, 0.5, 0.25], 6)
    s = limit_summary(br, leafwise_distribution_fibered(m))
    assert s.lambda_lim_0 == 0.0 and s.ordering_ok
    mu1 = (2 * N * math.sin(math.pi / N)) ** 2
    # second smallest limit: the lowest leaf-excited branch, close to (2π)²
    ends = sorted(b.values[-1] for b in br)
    assert any(abs(v - mu1) <= 1e-9 * mu1 for v in ends)
    assert abs(mu1 - FOUR_PI_SQ) / FOUR_PI_SQ <= 1e-3
