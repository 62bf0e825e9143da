import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from roitopo.distance import (
    WassersteinParams,
    augmented_cost_matrix,
    bottleneck_distance,
    solve_assignment,
    wasserstein_distance,
)
from roitopo.homology import PersistenceDiagram

from conftest import random_diagram
from oracles import brute_bottleneck, brute_wasserstein

EMPTY = np.zeros((0, 2))


def test_identity_is_zero(rng):
    X = random_diagram(rng, 7)
    assert wasserstein_distance(X, X) == 0
    assert bottleneck_distance(X, X) == 0


def test_single_point_to_empty():
    assert wasserstein_distance([[0, 2]], EMPTY, WassersteinParams(q=1)) == 1.0
    assert bottleneck_distance([[0, 1]], EMPTY) == 0.5


def test_direct_match_beats_diagonal_route():
    # direct: 1; via diagonal: sqrt(0.5^2 + 1^2)
    assert brute_wasserstein([[0, 1]], [[0, 2]], 2) == pytest.approx(1.0)
    assert wasserstein_distance([[0, 1]], [[0, 2]], WassersteinParams(q=2)) == pytest.approx(1.0, abs=1e-12)


def test_bottleneck_prefers_diagonal_route():
    # direct: 2; via diagonal: max(0.5, 1.5)
    assert brute_bottleneck([[0, 1]], [[0, 3]]) == 1.5
    assert bottleneck_distance([[0, 1]], [[0, 3]]) == 1.5


def test_both_empty():
    assert wasserstein_distance(EMPTY, EMPTY) == 0.0
    assert bottleneck_distance(EMPTY, EMPTY) == 0.0


def test_q_infinity_is_bottleneck(rng):
    X, Y = random_diagram(rng, 5), random_diagram(rng, 4)
    assert wasserstein_distance(X, Y, WassersteinParams(q=math.inf)) == bottleneck_distance(X, Y)


def test_invalid_order():
    with pytest.raises(ValueError):
        WassersteinParams(q=0.5)
    with pytest.raises(ValueError):
        WassersteinParams(essential_policy="keep")


def test_dimension_mismatch():
    a = PersistenceDiagram(0, [[0, 1]], 1.0)
    b = PersistenceDiagram(1, [[0, 1]], 1.0)
    with pytest.raises(ValueError, match="dimension"):
        wasserstein_distance(a, b)
    with pytest.raises(ValueError, match="dimension"):
        bottleneck_distance(a, b)


def test_essential_policies():
    a = PersistenceDiagram(0, [[0, 1], [0, math.inf]], 3.0)
    b = PersistenceDiagram(0, [[0, 1]], 3.0)
    assert wasserstein_distance(a, b) == 0.0
    # capped essential (0, 3) goes to the diagonal at cost 1.5
    assert wasserstein_distance(a, b, WassersteinParams(1, "cap_at_threshold")) == pytest.approx(1.5)
    assert bottleneck_distance(a, b, "cap_at_threshold") == pytest.approx(1.5)


@pytest.mark.parametrize("seed", range(40))
def test_solver_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = random_diagram(rng, int(rng.integers(0, 7)))
    Y = random_diagram(rng, int(rng.integers(0, 7)))
    for q in (1.0, 2.0, 3.5):
        assert wasserstein_distance(X, Y, WassersteinParams(q=q)) == pytest.approx(brute_wasserstein(X, Y, q), abs=1e-9)
    assert bottleneck_distance(X, Y) == pytest.approx(brute_bottleneck(X, Y), abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 5, 17, 60])
def test_assignment_against_scipy(n, rng):
    for _ in range(5):
        cost = rng.exponential(size=(n, n))
        cost[rng.random((n, n)) < 0.2] = 0.0
        ours = solve_assignment(cost)
        r, c = linear_sum_assignment(cost)
        assert sorted(ours) == list(range(n))
        assert cost[np.arange(n), ours].sum() == pytest.approx(cost[r, c].sum(), abs=1e-12)


def test_augmented_matrix_layout():
    x = np.array([[0.0, 2.0]])
    y = np.array([[1.0, 2.0], [0.0, 4.0]])
    c = augmented_cost_matrix(x, y)
    assert c.shape == (3, 3)
    assert c[0, :2].tolist() == [1.0, 2.0]
    assert c[0, 2] == 1.0
    assert c[1:, :2].tolist() == [[0.5, 2.0], [0.5, 2.0]]
    assert c[1:, 2].tolist() == [0.0, 0.0]


def test_metric_axioms(rng):
    for _ in range(100):
        X, Y, Z = (random_diagram(rng, int(rng.integers(0, 11))) for _ in range(3))
        xy, yx = wasserstein_distance(X, Y), wasserstein_distance(Y, X)
        assert xy >= 0
        assert abs(xy - yx) <= 1e-9
        assert wasserstein_distance(X, Z) <= xy + wasserstein_distance(Y, Z) + 1e-9


def test_bottleneck_below_w1(rng):
    for _ in range(100):
        X, Y = random_diagram(rng, int(rng.integers(0, 9))), random_diagram(rng, int(rng.integers(0, 9)))
        assert bottleneck_distance(X, Y) <= wasserstein_distance(X, Y, WassersteinParams(q=1)) + 1e-12


@pytest.mark.parametrize("c", [0.1, 0.5, 2.0])
def test_translation_against_brute_force(rng, c):
    X = random_diagram(rng, 5)
    shifted = X + c
    for q in (1.0, 2.0):
        assert wasserstein_distance(X, shifted, WassersteinParams(q=q)) == pytest.approx(brute_wasserstein(X, shifted, q), abs=1e-9)
