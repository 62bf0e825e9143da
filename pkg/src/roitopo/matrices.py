"""Pairwise-ROI (PR) and pairwise-subject (PS) Wasserstein distance matrices.

A PR matrix compares the diagrams of every ROI pair within one subject; a PS
matrix compares one ROI's diagram across every subject pair.  Both builders
go through a :class:`DiagramCache` so each series is embedded and reduced
once, however many pairs reuse it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distance import WassersteinParams, wasserstein_distance
from .embed import EmbeddingParams, sliding_window_embed
from .homology import FiltrationParams, compute_persistence, load_diagrams, save_diagrams

__all__ = [
    "DistanceMatrix",
    "DiagramCache",
    "MatrixFileError",
    "pairwise_roi_matrix",
    "pairwise_subject_matrix",
    "distance_matrix_from_diagrams",
    "save_matrix",
    "load_matrix",
]


class MatrixFileError(ValueError):
    pass


@dataclass
class DistanceMatrix:
    labels: list
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = [str(x) for x in self.labels]
        self.values = np.asarray(self.values, dtype=float)
        self.validate()

    def validate(self, atol: float = 0.0) -> None:
        v = self.values
        n = len(self.labels)
        if v.shape != (n, n):
            raise ValueError(f"matrix shape {v.shape} does not match {n} labels")
        if not np.all(np.isfinite(v)):
            raise ValueError("matrix has non-finite entries")
        if np.any(v < 0):
            raise ValueError("matrix has negative entries")
        if np.any(np.abs(v - v.T) > atol):
            i, j = np.unravel_index(np.argmax(np.abs(v - v.T)), v.shape)
            raise ValueError(f"matrix is not symmetric at ({self.labels[i]!r}, {self.labels[j]!r})")
        if np.any(np.diag(v) != 0):
            raise ValueError("matrix diagonal is not zero")

    @property
    def n(self) -> int:
        return len(self.labels)

    def permuted(self, order) -> "DistanceMatrix":
        order = list(order)
        return DistanceMatrix([self.labels[i] for i in order], self.values[np.ix_(order, order)], dict(self.meta))


def _series_digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()[:24]


def _params_digest(embed_params: EmbeddingParams, filtration: FiltrationParams) -> str:
    blob = json.dumps([embed_params.describe(), filtration.describe()], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class DiagramCache:
    """Persistence diagrams keyed by (subject, ROI, series content, parameters).

    Safe to share between threads: concurrent lookups of one key compute the
    diagram once and other callers wait for it.  With ``directory`` set, every
    diagram is also written to ``<directory>/<subject>/<roi>.csv`` and read
    back on a later run instead of being recomputed.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._memory = {}
        self._locks = {}
        self._guard = threading.Lock()
        self.computed = 0
        self.disk_hits = 0

    def _path(self, subject, roi, digest):
        safe = lambda s: "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in str(s))
        return self.directory / safe(subject) / f"{safe(roi)}.csv", self.directory / safe(subject) / f"{safe(roi)}.key"

    def get(self, subject, roi, series, embed_params: EmbeddingParams, filtration: FiltrationParams):
        values = np.asarray(series, dtype=float)
        key = (str(subject), str(roi), _series_digest(values), _params_digest(embed_params, filtration))
        with self._guard:
            if key in self._memory:
                return self._memory[key]
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key in self._memory:
                return self._memory[key]
            diagrams = self._load(key, filtration) if self.directory is not None else None
            if diagrams is None:
                try:
                    cloud = sliding_window_embed(values, embed_params)
                    diagrams = compute_persistence(cloud, filtration)
                except Exception as exc:
                    raise type(exc)(f"subject {subject!r}, ROI {roi!r}: {exc}") from exc
                with self._guard:
                    self.computed += 1
                if self.directory is not None:
                    self._store(key, diagrams)
            with self._guard:
                self._memory[key] = diagrams
            return diagrams

    def _load(self, key, filtration):
        csv_path, key_path = self._path(key[0], key[1], key[2])
        if not (csv_path.is_file() and key_path.is_file()):
            return None
        stored = json.loads(key_path.read_text())
        if stored.get("key") != list(key):
            return None
        diagrams = load_diagrams(csv_path, filtration.max_dim, stored["threshold"])
        with self._guard:
            self.disk_hits += 1
        return diagrams

    def _store(self, key, diagrams):
        csv_path, key_path = self._path(key[0], key[1], key[2])
        save_diagrams(diagrams, csv_path)
        key_path.write_text(json.dumps({"key": list(key), "threshold": diagrams[0].threshold}))


def distance_matrix_from_diagrams(labels, diagrams, params: WassersteinParams, meta: dict, jobs: int = 1) -> DistanceMatrix:
    """Fill the upper triangle with pairwise distances, optionally in threads."""
    n = len(diagrams)
    values = np.zeros((n, n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def entry(ij):
        i, j = ij
        return wasserstein_distance(diagrams[i], diagrams[j], params)

    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(entry, pairs, chunksize=16))
    else:
        results = [entry(ij) for ij in pairs]
    for (i, j), d in zip(pairs, results):
        values[i, j] = values[j, i] = d
    return DistanceMatrix(labels, values, meta)


def _diagrams_parallel(tasks, cache, embed_params, filtration, jobs):
    def run(task):
        subject, roi, series = task
        return cache.get(subject, roi, series, embed_params, filtration)

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]


def _base_meta(mode, k, params, embed_params, filtration, network):
    return {
        "mode": mode,
        "dim": int(k),
        **params.describe(),
        "network": network,
        "embedding": embed_params.describe(),
        "filtration": filtration.describe(),
    }


def pairwise_roi_matrix(subject, network, k: int, params: WassersteinParams | None = None,
                        embed_params: EmbeddingParams | None = None, filtration: FiltrationParams | None = None,
                        cache: DiagramCache | None = None, jobs: int = 1) -> DistanceMatrix:
    """n x n matrix of distances between the dimension-``k`` diagrams of a subject's ROIs.

    Rows follow ``network.roi_labels``.
    """
    params = params or WassersteinParams()
    embed_params = embed_params or EmbeddingParams()
    filtration = filtration or FiltrationParams(max_dim=k)
    if k > filtration.max_dim:
        raise ValueError(f"dimension {k} exceeds filtration max_dim {filtration.max_dim}")
    cache = cache if cache is not None else DiagramCache()
    missing = [r for r in network.roi_labels if r not in subject.series]
    if missing:
        raise KeyError(f"subject {subject.subject_id!r} is missing ROI {missing[0]!r} of network {network.name!r}")
    tasks = [(subject.subject_id, roi, subject.series[roi].values) for roi in network.roi_labels]
    diagrams = [d[k] for d in _diagrams_parallel(tasks, cache, embed_params, filtration, jobs)]
    meta = _base_meta("PR", k, params, embed_params, filtration, network.name)
    meta["subject"] = subject.subject_id
    meta["label"] = subject.label
    return distance_matrix_from_diagrams(network.roi_labels, diagrams, params, meta, jobs)


def pairwise_subject_matrix(cohort, roi_label: str, k: int, params: WassersteinParams | None = None,
                            embed_params: EmbeddingParams | None = None, filtration: FiltrationParams | None = None,
                            cache: DiagramCache | None = None, jobs: int = 1, network: str | None = None) -> DistanceMatrix:
    """N x N matrix of distances between subjects' dimension-``k`` diagrams for one ROI."""
    params = params or WassersteinParams()
    embed_params = embed_params or EmbeddingParams()
    filtration = filtration or FiltrationParams(max_dim=k)
    if k > filtration.max_dim:
        raise ValueError(f"dimension {k} exceeds filtration max_dim {filtration.max_dim}")
    cache = cache if cache is not None else DiagramCache()
    for s in cohort.subjects:
        if roi_label not in s.series:
            raise KeyError(f"unknown ROI {roi_label!r} for subject {s.subject_id!r}")
    tasks = [(s.subject_id, roi_label, s.series[roi_label].values) for s in cohort.subjects]
    diagrams = [d[k] for d in _diagrams_parallel(tasks, cache, embed_params, filtration, jobs)]
    meta = _base_meta("PS", k, params, embed_params, filtration, network)
    meta["roi"] = roi_label
    meta["subject_labels"] = [s.label for s in cohort.subjects]
    return distance_matrix_from_diagrams([s.subject_id for s in cohort.subjects], diagrams, params, meta, jobs)


# --------------------------------------------------------------------------
# files: <name>.csv (label header + rows) and <name>.json (labels, meta, checksum)

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_matrix(m: DistanceMatrix, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(m.labels)
    for row in m.values:
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    path.write_text(text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    _sidecar(path).write_text(json.dumps({"labels": m.labels, "meta": m.meta, "sha256": digest}, indent=1, sort_keys=True))
    return path


def load_matrix(path) -> DistanceMatrix:
    path = Path(path)
    text = path.read_text()
    try:
        side = json.loads(_sidecar(path).read_text())
    except FileNotFoundError:
        raise MatrixFileError(f"{path}: metadata sidecar {_sidecar(path)} is missing") from None
    except json.JSONDecodeError as exc:
        raise MatrixFileError(f"{_sidecar(path)}: malformed metadata ({exc})") from None

    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MatrixFileError(f"{path}: empty matrix file")
    labels = rows[0]
    body = rows[1:]
    if len(body) != len(labels) or any(len(r) != len(labels) for r in body):
        raise MatrixFileError(f"{path}: expected {len(labels)} rows of {len(labels)} values (truncated or malformed)")
    try:
        values = np.array([[float(c) for c in r] for r in body], dtype=float).reshape(len(labels), len(labels))
    except ValueError as exc:
        raise MatrixFileError(f"{path}: {exc}") from None
    if labels != side.get("labels"):
        raise MatrixFileError(f"{path}: labels disagree with metadata sidecar")
    try:
        m = DistanceMatrix(labels, values, side.get("meta", {}))
    except ValueError as exc:
        raise MatrixFileError(f"{path}: {exc}") from None
    if hashlib.sha256(text.encode()).hexdigest() != side.get("sha256"):
        raise MatrixFileError(f"{path}: checksum mismatch with metadata sidecar")
    return m
