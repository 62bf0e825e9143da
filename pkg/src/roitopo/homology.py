"""Vietoris-Rips persistence diagrams in dimensions 0, 1 and 2.

Two independent routes share one contract:

* :func:`compute_persistence` -- union-find for H0, cohomology reduction with
  clearing over implicitly enumerated simplices for H1/H2 (numba kernels in
  :mod:`roitopo._rips`).
* :func:`oracle_persistence` -- every simplex materialized, sorted by
  (diameter, dimension, vertices) and reduced left to right over Z/2.  Only
  feasible for tiny clouds; used to check the fast path.

Both return one :class:`PersistenceDiagram` per dimension.  Pairs with zero
persistence are dropped; classes still alive at the threshold carry
``death = inf``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import _rips
from .embed import PointCloud

__all__ = [
    "FiltrationParams",
    "PersistenceDiagram",
    "ResourceLimitError",
    "pairwise_distances",
    "enclosing_radius",
    "compute_persistence",
    "oracle_persistence",
    "save_diagrams",
    "load_diagrams",
]

ORACLE_MAX_POINTS = 12


class ResourceLimitError(RuntimeError):
    """Raised instead of silently truncating a filtration that is too large."""


@dataclass(frozen=True)
class FiltrationParams:
    """Rips filtration settings.

    ``threshold=None`` means the enclosing radius of the cloud.  The metric is
    always Euclidean.
    """

    max_dim: int = 2
    threshold: float | None = None
    max_simplices: int = 20_000_000

    def __post_init__(self):
        if self.max_dim not in (0, 1, 2):
            raise ValueError(f"max_dim must be 0, 1 or 2, got {self.max_dim}")
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.max_simplices < 1:
            raise ValueError("max_simplices must be positive")

    def describe(self) -> dict:
        return {
            "max_dim": self.max_dim,
            "threshold": "enclosing_radius" if self.threshold is None else float(self.threshold),
            "metric": "euclidean",
        }


@dataclass(frozen=True)
class PersistenceDiagram:
    """Persistence pairs of one homology dimension.

    ``pairs`` is an ``(m, 2)`` float array of (birth, death) rows sorted
    lexicographically; essential classes have ``death == inf``.
    """

    dim: int
    pairs: np.ndarray
    threshold: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.pairs, dtype=float).reshape(-1, 2)
        if arr.size:
            order = np.lexsort((arr[:, 1], arr[:, 0]))
            arr = arr[order]
        arr.setflags(write=False)
        object.__setattr__(self, "pairs", arr)

    @property
    def finite(self) -> np.ndarray:
        return self.pairs[np.isfinite(self.pairs[:, 1])]

    @property
    def essential_births(self) -> np.ndarray:
        return self.pairs[~np.isfinite(self.pairs[:, 1]), 0]

    @property
    def essential_count(self) -> int:
        return int((~np.isfinite(self.pairs[:, 1])).sum())

    @property
    def persistence(self) -> np.ndarray:
        return self.pairs[:, 1] - self.pairs[:, 0]

    def __len__(self):
        return self.pairs.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.pairs.shape == other.pairs.shape
            and bool(np.all(self.pairs == other.pairs))
        )

    def __hash__(self):
        return hash((self.dim, self.pairs.tobytes()))

    def __repr__(self):
        return (
            f"PersistenceDiagram(dim={self.dim}, finite={len(self.finite)}, "
            f"essential={self.essential_count}, threshold={self.threshold:.6g})"
        )


def _as_points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] < 2:
        raise ValueError(f"point cloud needs at least 2 points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud has non-finite coordinates")
    return pts


def pairwise_distances(cloud) -> np.ndarray:
    """Condensed Euclidean distance vector, as :func:`scipy.spatial.distance.pdist`."""
    return pdist(_as_points(cloud))


def enclosing_radius(distances) -> float:
    """Smallest eccentricity: ``min_p max_q d(p, q)``.

    Accepts a condensed vector or a square matrix.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim == 1:
        d = squareform(d)
    if d.shape[0] < 2:
        raise ValueError("enclosing radius needs at least 2 points")
    return float(d.max(axis=1).min())


def _resolve_threshold(dmat: np.ndarray, params: FiltrationParams) -> float:
    if params.threshold is None:
        return enclosing_radius(dmat)
    return float(params.threshold)


def compute_persistence(cloud, params: FiltrationParams | None = None) -> list[PersistenceDiagram]:
    """Rips persistence of a point cloud, one diagram per dimension ``0..max_dim``.

    Raises
    ------
    ResourceLimitError
        If the number of simplices that must be enumerated exceeds
        ``params.max_simplices``.
    """
    params = params or FiltrationParams()
    pts = _as_points(cloud)
    dmat = squareform(pdist(pts))
    return persistence_from_distances(dmat, params)


def persistence_from_distances(dmat, params: FiltrationParams | None = None) -> list[PersistenceDiagram]:
    """Same as :func:`compute_persistence` for a precomputed square distance matrix."""
    params = params or FiltrationParams()
    dmat = np.asarray(dmat, dtype=float)
    n = dmat.shape[0]
    if n < 2:
        raise ValueError(f"point cloud needs at least 2 points, got {n}")
    threshold = _resolve_threshold(dmat, params)

    values, inverse = np.unique(dmat, return_inverse=True)
    ranks = inverse.reshape(n, n).astype(np.int64)
    thr_rank = int(np.searchsorted(values, threshold, side="right")) - 1

    top = params.max_dim + 1
    if len(values) * math.comb(n, top + 1) >= _rips.INT64_MAX:
        raise ResourceLimitError(f"{n} points are too many to index {top}-simplices")
    n_edges = int(np.count_nonzero(np.triu(ranks <= thr_rank, 1)))
    if n_edges > params.max_simplices:
        raise ResourceLimitError(f"{n_edges} edges exceed the budget of {params.max_simplices}")

    meta = {"threshold": threshold, "threshold_source": params.describe()["threshold"]}
    death_ranks, n_essential0, cleared = _rips.h0_pairs(ranks, thr_rank)
    deaths = values[death_ranks]
    deaths = deaths[deaths > 0]
    h0 = np.column_stack([np.zeros(len(deaths) + n_essential0), np.concatenate([deaths, np.full(n_essential0, np.inf)])])
    diagrams = [PersistenceDiagram(0, h0, threshold, meta)]

    for dim in range(1, params.max_dim + 1):
        n_tri = 0
        if dim == 2:
            n_tri = int(_rips.count_triangles(ranks, thr_rank))
            if n_tri > params.max_simplices:
                raise ResourceLimitError(
                    f"{n_tri} triangles exceed the budget of {params.max_simplices}"
                )
        b, d, e, cleared = _rips.reduce_dimension(ranks, thr_rank, dim, cleared, n_tri)
        pairs = np.column_stack([values[b], values[d]])
        ess = np.column_stack([values[e], np.full(len(e), np.inf)])
        diagrams.append(PersistenceDiagram(dim, np.vstack([pairs, ess]), threshold, meta))
    return diagrams


def oracle_persistence(cloud, params: FiltrationParams | None = None) -> list[PersistenceDiagram]:
    """Brute-force Rips persistence by textbook boundary-matrix reduction.

    Limited to ``ORACLE_MAX_POINTS`` points.
    """
    params = params or FiltrationParams()
    pts = _as_points(cloud)
    n = len(pts)
    if n > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle handles at most {ORACLE_MAX_POINTS} points, got {n}")
    dmat = squareform(pdist(pts))
    threshold = _resolve_threshold(dmat, params)

    simplices = []
    for k in range(params.max_dim + 2):
        for verts in itertools.combinations(range(n), k + 1):
            diam = max((dmat[a, b] for a, b in itertools.combinations(verts, 2)), default=0.0)
            if diam <= threshold:
                simplices.append((diam, k, verts))
    simplices.sort()
    index = {s[2]: i for i, s in enumerate(simplices)}

    columns = []
    for diam, k, verts in simplices:
        if k == 0:
            columns.append(set())
        else:
            columns.append({index[f] for f in itertools.combinations(verts, k)})

    low_owner = {}
    paired_birth = set()
    pairs = {k: [] for k in range(params.max_dim + 1)}
    for j, col in enumerate(columns):
        while col:
            low = max(col)
            if low not in low_owner:
                break
            col ^= columns[low_owner[low]]
        if col:
            low = max(col)
            low_owner[low] = j
            paired_birth.add(low)
            birth_diam, k, _ = simplices[low]
            death_diam = simplices[j][0]
            if k <= params.max_dim and death_diam > birth_diam:
                pairs[k].append((birth_diam, death_diam))

    for j, (diam, k, _) in enumerate(simplices):
        if k <= params.max_dim and not columns[j] and j not in paired_birth:
            pairs[k].append((diam, math.inf))

    meta = {"threshold": threshold, "threshold_source": params.describe()["threshold"]}
    return [PersistenceDiagram(k, np.array(pairs[k], dtype=float).reshape(-1, 2), threshold, meta) for k in range(params.max_dim + 1)]


def save_diagrams(diagrams, path) -> None:
    """Write diagrams as CSV rows ``dimension,birth,death`` (``inf`` for essential)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dimension", "birth", "death"])
        for dgm in diagrams:
            for b, d in dgm.pairs:
                w.writerow([dgm.dim, repr(float(b)), "inf" if math.isinf(d) else repr(float(d))])


def load_diagrams(path, max_dim: int = 2, threshold: float = math.nan) -> list[PersistenceDiagram]:
    rows = {k: [] for k in range(max_dim + 1)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["dimension", "birth", "death"]:
            raise ValueError(f"{path}: unexpected diagram header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"{path}:{line_no}: expected 3 fields, got {len(row)}")
            k = int(row[0])
            if k not in rows:
                raise ValueError(f"{path}:{line_no}: dimension {k} above max_dim={max_dim}")
            rows[k].append((float(row[1]), float(row[2])))
    return [PersistenceDiagram(k, np.array(rows[k], dtype=float).reshape(-1, 2), threshold) for k in range(max_dim + 1)]
