"""Sliding-window (delay) embedding of scalar time series."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["EmbeddingParams", "PointCloud", "sliding_window_embed", "save_cloud", "load_cloud"]


@dataclass(frozen=True)
class EmbeddingParams:
    """Embedding dimension ``M`` and lag ``tau``; each window holds ``M + 1`` samples."""

    M: int = 2
    tau: int = 1
    zscore: bool = False

    def __post_init__(self):
        if self.M < 0:
            raise ValueError(f"embedding dimension must be >= 0, got {self.M}")
        if self.tau < 1:
            raise ValueError(f"time lag must be >= 1, got {self.tau}")

    @property
    def span(self) -> int:
        return self.M * self.tau

    def describe(self) -> dict:
        return {"M": self.M, "tau": self.tau, "zscore": self.zscore}


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    source_length: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def sliding_window_embed(series, params: EmbeddingParams | None = None) -> PointCloud:
    """Embed ``series`` as the points ``(f(i), f(i+tau), ..., f(i+M*tau))``.

    Only windows that fit inside the series are emitted, so a series of
    length ``N`` gives ``N - M*tau`` points in time order.

    >>> sliding_window_embed([1, 2, 3, 4, 5]).points.tolist()
    [[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]]
    """
    params = params or EmbeddingParams()
    values = np.asarray(getattr(series, "values", series), dtype=float).ravel()
    n = values.shape[0]
    if n - params.span < 2:
        raise ValueError(
            f"series of length {n} is too short for M={params.M}, tau={params.tau} "
            f"(need at least {params.span + 2} samples)"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("series contains non-finite values")
    if params.zscore:
        sd = values.std()
        values = (values - values.mean()) / (sd if sd > 0 else 1.0)
    count = n - params.span
    idx = np.arange(count)[:, None] + params.tau * np.arange(params.M + 1)[None, :]
    return PointCloud(values[idx], n)


def save_cloud(cloud: PointCloud, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, cloud.points, delimiter=",", fmt="%.17g")


def load_cloud(path) -> PointCloud:
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    return PointCloud(pts, pts.shape[0])
