"""Wasserstein and bottleneck distances between persistence diagrams.

Points are compared in the L-infinity norm.  Every point may instead be sent
to its diagonal projection ``((b+d)/2, (b+d)/2)`` at cost ``(d-b)/2``.  The
diagonal-augmented problem is an ``(m+n) x (m+n)`` assignment:

    [ point-to-point   | x_i to diagonal ]
    [ diagonal to y_j  |       0         ]

Diagonal slots are interchangeable, so each off-diagonal block row/column
carries the same cost everywhere instead of infinities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .homology import PersistenceDiagram

__all__ = [
    "WassersteinParams",
    "wasserstein_distance",
    "bottleneck_distance",
    "augmented_cost_matrix",
    "solve_assignment",
    "prepare_points",
]

ESSENTIAL_POLICIES = ("drop", "cap_at_threshold")


@dataclass(frozen=True)
class WassersteinParams:
    q: float = 2.0
    essential_policy: str = "drop"

    def __post_init__(self):
        if not self.q >= 1:
            raise ValueError(f"Wasserstein order q must be >= 1, got {self.q}")
        if self.essential_policy not in ESSENTIAL_POLICIES:
            raise ValueError(f"essential_policy must be one of {ESSENTIAL_POLICIES}, got {self.essential_policy!r}")

    def describe(self) -> dict:
        return {"q": "inf" if math.isinf(self.q) else float(self.q), "essential_policy": self.essential_policy}


@njit(cache=True, nogil=True)
def solve_assignment(cost):
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with row/column potentials (Hungarian method,
    O(n^3)).  Returns ``col_of_row``.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.empty(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = np.inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def prepare_points(dgm, policy: str = "drop") -> np.ndarray:
    """Finite ``(k, 2)`` array from a diagram, applying the essential-class policy."""
    if isinstance(dgm, PersistenceDiagram):
        pts = dgm.pairs
        threshold = dgm.threshold
    else:
        pts = np.asarray(dgm, dtype=float).reshape(-1, 2)
        threshold = math.nan
    inf_rows = ~np.isfinite(pts[:, 1])
    if not inf_rows.any():
        return pts
    if policy == "drop":
        return pts[~inf_rows]
    if not math.isfinite(threshold):
        raise ValueError("cap_at_threshold needs a diagram with a finite threshold")
    capped = pts.copy()
    capped[inf_rows, 1] = threshold
    return capped[capped[:, 1] > capped[:, 0]]


def augmented_cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unpowered L-infinity costs of the diagonal-augmented assignment problem."""
    m, n = len(x), len(y)
    size = m + n
    cost = np.zeros((size, size))
    if m and n:
        cost[:m, :n] = np.maximum(np.abs(x[:, None, 0] - y[None, :, 0]), np.abs(x[:, None, 1] - y[None, :, 1]))
    if m:
        cost[:m, n:] = ((x[:, 1] - x[:, 0]) / 2)[:, None]
    if n:
        cost[m:, :n] = ((y[:, 1] - y[:, 0]) / 2)[None, :]
    return cost


def _check_dims(X, Y):
    if isinstance(X, PersistenceDiagram) and isinstance(Y, PersistenceDiagram) and X.dim != Y.dim:
        raise ValueError(f"cannot compare diagrams of dimension {X.dim} and {Y.dim}")


def wasserstein_distance(X, Y, params: WassersteinParams | None = None) -> float:
    """q-Wasserstein distance with L-infinity ground metric.

    ``params.q == inf`` delegates to :func:`bottleneck_distance`.
    """
    params = params or WassersteinParams()
    _check_dims(X, Y)
    x = prepare_points(X, params.essential_policy)
    y = prepare_points(Y, params.essential_policy)
    if math.isinf(params.q):
        return _bottleneck(x, y)
    if len(x) + len(y) == 0:
        return 0.0
    cost = augmented_cost_matrix(x, y) ** params.q
    assign = solve_assignment(cost)
    total = float(cost[np.arange(len(assign)), assign].sum())
    return total ** (1.0 / params.q)


def bottleneck_distance(X, Y, essential_policy: str = "drop") -> float:
    """Smallest achievable maximum L-infinity cost over augmented matchings."""
    _check_dims(X, Y)
    return _bottleneck(prepare_points(X, essential_policy), prepare_points(Y, essential_policy))


def _perfect_at(cost: np.ndarray, level: float) -> bool:
    graph = csr_matrix((cost <= level).astype(np.int8))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def _bottleneck(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) + len(y) == 0:
        return 0.0
    cost = augmented_cost_matrix(x, y)
    candidates = np.unique(cost)
    # every row and column must reach at least one edge
    floor = max(cost.min(axis=1).max(), cost.min(axis=0).max())
    lo = int(np.searchsorted(candidates, floor))
    hi = len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_at(cost, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])
