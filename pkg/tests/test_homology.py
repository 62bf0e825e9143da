import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roitopo.distance import bottleneck_distance
from roitopo.homology import (
    FiltrationParams,
    PersistenceDiagram,
    ResourceLimitError,
    compute_persistence,
    enclosing_radius,
    load_diagrams,
    oracle_persistence,
    pairwise_distances,
    save_diagrams,
)
from scipy.spatial.distance import squareform

SQUARE = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
TRIANGLE = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])


def assert_same(a, b, tol=1e-9):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.dim == y.dim
        assert x.pairs.shape == y.pairs.shape, (x.pairs, y.pairs)
        assert np.array_equal(np.isinf(x.pairs), np.isinf(y.pairs))
        fin = np.isfinite(x.pairs)
        assert np.allclose(x.pairs[fin], y.pairs[fin], atol=tol, rtol=0)


def test_pairwise_distances():
    d = squareform(pairwise_distances([[0, 0, 0], [3, 4, 0]]))
    assert d[0, 1] == 5
    pts = np.random.default_rng(1).normal(size=(6, 3))
    pts[3] = pts[1]
    d = squareform(pairwise_distances(pts))
    assert np.all(np.diag(d) == 0) and np.array_equal(d, d.T)
    assert np.count_nonzero(d[np.triu_indices(6, 1)] == 0) == 1


def test_enclosing_radius():
    assert enclosing_radius(pairwise_distances([[0, 0, 0], [1, 0, 0]])) == 1
    assert enclosing_radius(pairwise_distances(TRIANGLE)) == pytest.approx(1, abs=1e-15)
    assert enclosing_radius(pairwise_distances(SQUARE)) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_two_points():
    dgms = compute_persistence([[0, 0, 0], [1, 0, 0]], FiltrationParams(max_dim=1))
    assert dgms[0].finite.tolist() == [[0, 1]]
    assert dgms[0].essential_count == 1
    assert len(dgms[1]) == 0
    assert_same(dgms, oracle_persistence([[0, 0, 0], [1, 0, 0]], FiltrationParams(max_dim=1)))


def test_unit_square_loop():
    h1 = compute_persistence(SQUARE)[1]
    assert h1.pairs.shape == (1, 2)
    assert h1.pairs[0] == pytest.approx([1, math.sqrt(2)], abs=1e-9)
    assert_same(compute_persistence(SQUARE), oracle_persistence(SQUARE))


def test_equilateral_triangle():
    dgms = compute_persistence(TRIANGLE)
    assert dgms[0].finite == pytest.approx(np.array([[0, 1], [0, 1]]), abs=1e-12)
    assert dgms[0].essential_count == 1
    assert len(dgms[1]) == 0
    assert_same(dgms, oracle_persistence(TRIANGLE))


def test_octahedron_void():
    # regular octahedron: H2 class born at edge length sqrt(2), dies at diagonal 2
    pts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    p = FiltrationParams(max_dim=2, threshold=3.0)
    dgms = compute_persistence(pts, p)
    assert dgms[2].pairs == pytest.approx(np.array([[math.sqrt(2), 2.0]]))
    assert_same(dgms, oracle_persistence(pts, p))


def test_single_point_rejected():
    with pytest.raises(ValueError):
        compute_persistence([[0, 0, 0]])
    with pytest.raises(ValueError):
        oracle_persistence([[0, 0, 0]])


def test_oracle_size_limit():
    with pytest.raises(ValueError, match="at most"):
        oracle_persistence(np.zeros((13, 3)) + np.arange(13)[:, None])


def test_resource_limit():
    pts = np.random.default_rng(0).normal(size=(40, 3))
    with pytest.raises(ResourceLimitError):
        compute_persistence(pts, FiltrationParams(max_dim=2, max_simplices=500))


def test_params_validation():
    with pytest.raises(ValueError):
        FiltrationParams(max_dim=3)
    with pytest.raises(ValueError):
        FiltrationParams(threshold=0.0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("threshold", [None, 0.35, 10.0])
def test_fast_matches_oracle_with_thresholds(seed, threshold):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(int(rng.integers(4, 10)), 3))
    p = FiltrationParams(2, threshold)
    assert_same(compute_persistence(pts, p), oracle_persistence(pts, p))


def test_duplicate_points_match_oracle():
    pts = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    assert_same(compute_persistence(pts), oracle_persistence(pts))


def test_grid_ties_match_oracle():
    g = np.array([[i, j, k] for i in range(2) for j in range(2) for k in range(2)], dtype=float)
    assert_same(compute_persistence(g, FiltrationParams(2, 2.0)), oracle_persistence(g, FiltrationParams(2, 2.0)))


clouds = st.integers(4, 8).flatmap(
    lambda n: st.lists(st.tuples(*[st.floats(0, 1, allow_nan=False)] * 3), min_size=n, max_size=n)
)


@settings(max_examples=40, deadline=None)
@given(clouds)
def test_h0_count(points):
    pts = np.array(points)
    dgms = compute_persistence(pts, FiltrationParams(max_dim=0))
    # zero-length merges are dropped, so count the coincident-point merges too
    n_unique = len(np.unique(pts, axis=0))
    assert len(dgms[0].finite) + dgms[0].essential_count == n_unique
    assert dgms[0].essential_count == 1


@settings(max_examples=30, deadline=None)
@given(clouds, st.floats(0.1, 10))
def test_scale_equivariance(points, c):
    pts = np.array(points)
    a = compute_persistence(pts)
    b = compute_persistence(pts * c)
    for x, y in zip(a, b):
        assert x.pairs.shape == y.pairs.shape
        fin = np.isfinite(x.pairs)
        assert np.allclose(x.pairs[fin] * c, y.pairs[fin], rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(clouds, st.floats(0.05, 0.5), st.floats(0.0, 0.5))
def test_monotone_threshold(points, low, extra):
    pts = np.array(points)
    lo = compute_persistence(pts, FiltrationParams(2, low))
    hi = compute_persistence(pts, FiltrationParams(2, low + extra))
    for a, b in zip(lo, hi):
        for pair in a.finite:
            assert any(np.allclose(pair, q, atol=1e-12) for q in b.finite)


@pytest.mark.parametrize("seed", range(10))
def test_stability(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(30, 3))
    eps = 0.01
    moved = pts + rng.uniform(-1, 1, size=pts.shape) * eps / math.sqrt(3)
    p = FiltrationParams(2, 0.6)
    for a, b in zip(compute_persistence(pts, p), compute_persistence(moved, p)):
        assert bottleneck_distance(a, b, "cap_at_threshold") <= 2 * eps + 1e-9


def test_diagram_file_roundtrip(tmp_path):
    dgms = compute_persistence(np.random.default_rng(3).normal(size=(25, 3)))
    save_diagrams(dgms, tmp_path / "s" / "r.csv")
    back = load_diagrams(tmp_path / "s" / "r.csv", 2, dgms[0].threshold)
    assert back == dgms
    text = (tmp_path / "s" / "r.csv").read_text()
    assert text.splitlines()[0] == "dimension,birth,death" and ",inf" in text


def test_diagram_file_rejects_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b,c\n0,0,1\n")
    with pytest.raises(ValueError):
        load_diagrams(tmp_path / "x.csv")


def test_diagram_equality_and_views():
    d = PersistenceDiagram(1, [[0.5, math.inf], [0.1, 0.3]], 1.0)
    assert d.pairs[0].tolist() == [0.1, 0.3]
    assert d.essential_count == 1
    assert d.essential_births.tolist() == [0.5]
    assert d == PersistenceDiagram(1, [[0.1, 0.3], [0.5, math.inf]], 2.0)
