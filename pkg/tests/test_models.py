import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adialab.errors import (DegenerateSpan, HeuristicRationality, MixedRationality,
                            NonPositiveMetric, TransverseLeafDependence)
from adialab.models import (Bigrade, Rationality, bigrades_of_degree, build_fibered_model,
                            build_flat_model, integer_kernel, saturate)


def frame_errors(m):
    U, W = m.U, m.W
    return (np.abs(U @ U.T - np.eye(m.p)).max(), np.abs(U @ W.T).max(),
            np.abs(U.T @ U + W.T @ W - np.eye(m.n)).max())


def test_axis_fibration():
    m = build_flat_model(2, 1, [[1, 0]])
    assert np.allclose(m.U, [[1, 0]]) and np.allclose(m.W, [[0, 1]])
    assert m.rationality is Rationality.FIBRATION
    assert m.leaf_lattice == ((1, 0),)
    assert m.leaf_volume() == pytest.approx(1.0)


def test_kronecker_frame():
    with pytest.warns(HeuristicRationality):
        m = build_flat_model(2, 1, [[1, "sqrt(2)"]])
    s3 = math.sqrt(3)
    np.testing.assert_allclose(m.U, [[1 / s3, math.sqrt(2) / s3]], atol=1e-15)
    np.testing.assert_allclose(m.W, [[-math.sqrt(2) / s3, 1 / s3]], atol=1e-15)
    assert m.rationality is Rationality.DENSE_LEAVES
    assert m.heuristic


def test_three_torus_example():
    m = build_flat_model(3, 2, [[1, 0, 0], [1, 1, 0]])
    np.testing.assert_allclose(m.U, [[1, 0, 0], [0, 1, 0]], atol=1e-15)
    np.testing.assert_allclose(m.W, [[0, 0, 1]], atol=1e-15)
    assert m.rationality is Rationality.FIBRATION
    assert not m.heuristic


def test_gcd_reduction():
    m = build_flat_model(2, 1, [[2, 4]])
    assert m.leaf_lattice == ((1, 2),)
    assert m.leaf_volume() == pytest.approx(math.sqrt(5), rel=1e-14)


def test_rational_string_slope():
    m = build_flat_model(2, 1, [[1, "1/3"]])
    assert m.leaf_lattice == ((3, 1),)
    assert m.leaf_volume() == pytest.approx(math.sqrt(10), rel=1e-14)


def test_mixed_rejected():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeuristicRationality)
        with pytest.raises(MixedRationality):
            build_flat_model(3, 2, [[1, 0, 0], [0, 1, "sqrt(2)"]])


def test_degenerate_span():
    with pytest.raises(DegenerateSpan):
        build_flat_model(3, 2, [[1, 2, 0], [2, 4, 0]])


def test_bad_dimensions():
    with pytest.raises(ValueError):
        build_flat_model(2, 2, [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        build_flat_model(2, 1, [[1, 0, 0]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(-5, 5), min_size=3, max_size=3), min_size=1, max_size=2))
def test_frame_invariants(spans):
    A = np.array(spans, dtype=float)
    if np.linalg.matrix_rank(A) < len(spans):
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeuristicRationality)
        try:
            m = build_flat_model(3, len(spans), spans)
        except MixedRationality:
            return
    assert max(frame_errors(m)) <= 1e-12
    # integer spans: leaves are closed
    assert m.rationality is Rationality.FIBRATION
    # rebuilding from the orthonormal rows reproduces the projector
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeuristicRationality)
        again = build_flat_model(3, m.p, m.U.tolist())
    assert np.abs(again.projector - m.projector).max() <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(-6, 6), min_size=4, max_size=4), min_size=1, max_size=3))
def test_integer_kernel(rows):
    K = integer_kernel(rows, 4)
    A = np.array(rows, dtype=np.int64)
    assert len(K) == 4 - np.linalg.matrix_rank(A.astype(float))
    for k in K:
        assert not np.any(A @ np.array(k))


def test_saturate_primitive():
    basis = saturate([(2, 4, 6)], 3)
    assert basis == ((1, 2, 3),)


@given(st.integers(1, 4), st.integers(1, 4))
def test_bigrade_degree_sum(p, q):
    for k in range(p + q + 1):
        total = sum(g.multiplicity(p, q) for g in bigrades_of_degree(k, p, q))
        assert total == math.comb(p + q, k)
    assert sum(Bigrade(i, j).multiplicity(p, q)
               for i in range(p + 1) for j in range(q + 1)) == 2 ** (p + q)


def test_bigrade_out_of_range():
    with pytest.raises(ValueError):
        Bigrade(2, 0).check(1, 1)


def test_fibered_models():
    flat = build_fibered_model(64, 64, "1", "1")
    assert np.all(flat.a == 1) and np.all(flat.b == 1)
    m = build_fibered_model(128, 128, "1 + 0.3*cos(2*pi*x)*cos(2*pi*y)",
                            "1 + 0.5*sin(2*pi*y)^2")
    assert m.a.min() == pytest.approx(0.7, abs=1e-12)
    assert m.b.shape == (128,)
    with pytest.raises(TransverseLeafDependence, match="bundle-like"):
        build_fibered_model(16, 16, "1", "1 + 0.1*cos(2*pi*x)")
    with pytest.raises(NonPositiveMetric):
        build_fibered_model(16, 16, "cos(2*pi*x)", "1")
    with pytest.raises(ValueError):
        build_fibered_model(2, 16, "1", "1")
