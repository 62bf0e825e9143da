"""Cohort loading, atlas network metadata and synthetic cohorts.

On disk a cohort is a JSON manifest plus one CSV per subject::

    {"subjects": [{"id": "s01", "label": "HC", "csv_path": "s01.csv"}, ...],
     "networks": "builtin"}

Each subject CSV has a header row of ROI labels followed by one row per
timepoint.  ``networks`` is either ``"builtin"`` (the six-network atlas
below) or a list of ``{"name": ..., "roi_labels": [...]}`` objects.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "NETWORK_SIZES",
    "CohortError",
    "TimeSeries",
    "NetworkDescriptor",
    "SubjectRecord",
    "CohortDataset",
    "SyntheticSpec",
    "ClassRecipe",
    "atlas_network",
    "atlas_networks",
    "load_cohort",
    "write_cohort",
    "generate_synthetic_cohort",
]

# ROI counts of the six Dosenbach functional networks (160 ROIs in total).
NETWORK_SIZES = {
    "cerebellum": 18,
    "cingulo_opercular": 32,
    "default_mode": 34,
    "fronto_parietal": 21,
    "occipital": 22,
    "sensorimotor": 33,
}

# Only these region names are known; the remaining labels are positional
# placeholders of the form "<network> <k>".
_NAMED_ROIS = {
    "default_mode": ["Post cingulate 108"],
    "cerebellum": ["inf cerebellum 121"],
    "fronto_parietal": ["IPL 96"],
    "occipital": ["Occipital1 106"],
    "cingulo_opercular": ["Post cingulate 80"],
    "sensorimotor": ["Pre-SMA 41"],
}

MIN_SERIES_LENGTH = 4


class CohortError(ValueError):
    """Invalid or inconsistent cohort data; the message names the subject/ROI."""


@dataclass(frozen=True)
class TimeSeries:
    roi_label: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.shape[0] < MIN_SERIES_LENGTH:
            raise CohortError(f"ROI {self.roi_label!r}: series has {v.shape[0]} samples, need >= {MIN_SERIES_LENGTH}")
        if not np.all(np.isfinite(v)):
            raise CohortError(f"ROI {self.roi_label!r}: non-finite value at index {int(np.flatnonzero(~np.isfinite(v))[0])}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.roi_label == other.roi_label and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class NetworkDescriptor:
    name: str
    roi_labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "roi_labels", tuple(self.roi_labels))
        if not self.roi_labels:
            raise CohortError(f"network {self.name!r} has no ROIs")
        if len(set(self.roi_labels)) != len(self.roi_labels):
            raise CohortError(f"network {self.name!r} has duplicate ROI labels")

    @property
    def size(self) -> int:
        return len(self.roi_labels)


@dataclass
class SubjectRecord:
    subject_id: str
    label: str
    series: dict  # roi_label -> TimeSeries, in file column order

    @property
    def length(self) -> int:
        return len(next(iter(self.series.values())))

    def values(self, roi_labels) -> np.ndarray:
        """Stack the named series into a ``(len(roi_labels), N)`` array."""
        return np.vstack([self.series[r].values for r in roi_labels])


@dataclass
class CohortDataset:
    subjects: list
    networks: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        seen = set()
        for subj in self.subjects:
            if subj.subject_id in seen:
                raise CohortError(f"duplicate subject id {subj.subject_id!r}")
            seen.add(subj.subject_id)
            if not subj.series:
                raise CohortError(f"subject {subj.subject_id!r} has no series")
            lengths = {len(ts) for ts in subj.series.values()}
            if len(lengths) > 1:
                raise CohortError(f"subject {subj.subject_id!r}: ragged series lengths {sorted(lengths)}")
            for net in self.networks:
                for roi in net.roi_labels:
                    if roi not in subj.series:
                        raise CohortError(
                            f"subject {subj.subject_id!r} is missing ROI {roi!r} required by network {net.name!r}"
                        )

    @property
    def labels(self) -> list:
        return [s.label for s in self.subjects]

    @property
    def classes(self) -> list:
        return sorted(set(self.labels))

    def network(self, name: str) -> NetworkDescriptor:
        for net in self.networks:
            if net.name == name:
                return net
        raise KeyError(f"cohort has no network {name!r}; known: {[n.name for n in self.networks]}")

    def subject(self, subject_id: str) -> SubjectRecord:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(subject_id)

    def __len__(self):
        return len(self.subjects)

    def __eq__(self, other):
        if not isinstance(other, CohortDataset):
            return NotImplemented
        if [n for n in self.networks] != [n for n in other.networks] or len(self) != len(other):
            return False
        for a, b in zip(self.subjects, other.subjects):
            if (a.subject_id, a.label, list(a.series)) != (b.subject_id, b.label, list(b.series)):
                return False
            if any(a.series[k] != b.series[k] for k in a.series):
                return False
        return True


def atlas_network(name: str) -> NetworkDescriptor:
    """Return the builtin descriptor for one of the six atlas networks."""
    if name not in NETWORK_SIZES:
        raise KeyError(f"unknown network {name!r}; expected one of {sorted(NETWORK_SIZES)}")
    named = _NAMED_ROIS.get(name, [])
    placeholders = [f"{name} {k:02d}" for k in range(1, NETWORK_SIZES[name] - len(named) + 1)]
    return NetworkDescriptor(name, tuple(named + placeholders))


def atlas_networks() -> list:
    return [atlas_network(name) for name in NETWORK_SIZES]


# --------------------------------------------------------------------------
# disk I/O

def _read_subject_csv(path: Path, subject_id: str) -> dict:
    if not path.is_file():
        raise CohortError(f"subject {subject_id!r}: CSV file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError(f"subject {subject_id!r}: empty CSV {path}") from None
        if len(set(header)) != len(header):
            raise CohortError(f"subject {subject_id!r}: duplicate ROI labels in header of {path}")
        columns = [[] for _ in header]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortError(
                    f"subject {subject_id!r}: {path}:{line_no} has {len(row)} fields, header has {len(header)}"
                )
            for col, cell in zip(columns, row):
                col.append(cell)
    series = {}
    for roi, col in zip(header, columns):
        try:
            vals = np.array([float(c) for c in col])
        except ValueError as exc:
            raise CohortError(f"subject {subject_id!r}, ROI {roi!r}: {exc}") from None
        try:
            series[roi] = TimeSeries(roi, vals)
        except CohortError as exc:
            raise CohortError(f"subject {subject_id!r}, {exc}") from None
    return series


def _parse_networks(spec) -> list:
    if spec in (None, "builtin"):
        return atlas_networks()
    if not isinstance(spec, list):
        raise CohortError(f"'networks' must be 'builtin' or a list, got {type(spec).__name__}")
    return [NetworkDescriptor(item["name"], tuple(item["roi_labels"])) for item in spec]


def load_cohort(manifest_path) -> CohortDataset:
    """Load and validate a cohort from a JSON manifest.

    Relative ``csv_path`` entries resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CohortError(f"manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    networks = _parse_networks(manifest.get("networks", "builtin"))
    subjects = []
    for entry in manifest["subjects"]:
        sid = str(entry["id"])
        csv_path = Path(entry["csv_path"])
        if not csv_path.is_absolute():
            csv_path = manifest_path.parent / csv_path
        series = _read_subject_csv(csv_path, sid)
        subjects.append(SubjectRecord(sid, str(entry["label"]), series))
    return CohortDataset(subjects, networks)


def write_cohort(cohort: CohortDataset, directory, builtin_networks: bool | None = None) -> Path:
    """Write ``manifest.json`` and one CSV per subject; returns the manifest path.

    Values are written with 17 significant digits so reloading is exact.
    """
    directory = Path(directory)
    (directory / "subjects").mkdir(parents=True, exist_ok=True)
    entries = []
    for subj in cohort.subjects:
        rel = Path("subjects") / f"{subj.subject_id}.csv"
        rois = list(subj.series)
        data = subj.values(rois).T
        with open(directory / rel, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(rois)
            for row in data:
                w.writerow([f"{v:.17g}" for v in row])
        entries.append({"id": subj.subject_id, "label": subj.label, "csv_path": rel.as_posix()})
    if builtin_networks is None:
        builtin_networks = cohort.networks == atlas_networks()
    networks = "builtin" if builtin_networks else [
        {"name": n.name, "roi_labels": list(n.roi_labels)} for n in cohort.networks
    ]
    manifest = directory / "manifest.json"
    with open(manifest, "w") as fh:
        json.dump({"subjects": entries, "networks": networks}, fh, indent=1)
    return manifest


# --------------------------------------------------------------------------
# synthetic cohorts

@dataclass(frozen=True)
class ClassRecipe:
    label: str
    period: float
    amplitude: float = 1.0
    noise_sd: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a labelled cohort of noisy phase-randomized sinusoids."""

    classes: tuple
    subjects_per_class: int = 10
    timepoints: int = 140
    rois_per_network: int = 18
    network_name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ValueError("at least one class recipe is required")
        if len({c.label for c in self.classes}) != len(self.classes):
            raise ValueError("class labels must be distinct")
        for c in self.classes:
            if c.period < 4:
                raise ValueError(f"class {c.label!r}: period must be >= 4 samples, got {c.period}")
            if c.noise_sd < 0:
                raise ValueError(f"class {c.label!r}: noise sd must be >= 0")
            if self.timepoints < 3 * c.period:
                raise ValueError(
                    f"class {c.label!r}: {self.timepoints} timepoints cover fewer than 3 periods of {c.period}"
                )
        if self.subjects_per_class < 1 or self.rois_per_network < 1:
            raise ValueError("subjects_per_class and rois_per_network must be positive")


def generate_synthetic_cohort(spec: SyntheticSpec, seed: int) -> CohortDataset:
    """Deterministic cohort: ``amplitude * sin(2 pi t / period + phase) + noise``.

    Each ROI draws its own uniform phase; noise is i.i.d. Gaussian.  Subjects
    are ordered class by class.
    """
    rng = np.random.default_rng(seed)
    rois = tuple(f"roi {k:02d}" for k in range(1, spec.rois_per_network + 1))
    t = np.arange(spec.timepoints)
    subjects = []
    for recipe in spec.classes:
        for i in range(spec.subjects_per_class):
            phases = rng.uniform(0, 2 * math.pi, size=len(rois))
            noise = rng.normal(0.0, 1.0, size=(len(rois), spec.timepoints)) * recipe.noise_sd
            data = recipe.amplitude * np.sin(2 * math.pi * t[None, :] / recipe.period + phases[:, None]) + noise
            sid = f"{recipe.label}_{i + 1:03d}"
            subjects.append(SubjectRecord(sid, recipe.label, {r: TimeSeries(r, row) for r, row in zip(rois, data)}))
    return CohortDataset(subjects, [NetworkDescriptor(spec.network_name, rois)])
