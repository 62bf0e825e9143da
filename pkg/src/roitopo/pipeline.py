"""End-to-end pipeline: cohort -> diagrams -> PR/PS matrices -> P-plots -> models.

Every artifact is keyed by a hash of the inputs and parameters that produced
it.  Each stage directory carries ``provenance.json`` mapping artifact paths
to keys; a rerun skips any artifact whose file exists with an unchanged key.
A stage is marked ``complete: false`` until all of its artifacts are written.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .distance import WassersteinParams
from .embed import EmbeddingParams
from .homology import FiltrationParams
from .ingest import ClassRecipe, CohortDataset, SyntheticSpec, generate_synthetic_cohort, load_cohort, write_cohort
from .learn import TrainConfig, save_model, train
from .matrices import DiagramCache, DistanceMatrix, distance_matrix_from_diagrams, load_matrix, save_matrix
from .stats import save_significance_map, significance_map

log = logging.getLogger(__name__)

__all__ = ["PipelineConfig", "PipelineError", "RunResult", "run_pipeline", "read_config_file", "parse_classes"]

STAGES = ("cohort", "persist", "distmat", "stats", "train")


class PipelineError(RuntimeError):
    def __init__(self, stage, item, cause):
        super().__init__(f"stage {stage!r} failed on {item}: {cause}")
        self.stage = stage
        self.item = item


def parse_classes(text: str) -> tuple:
    """``"A:20:1:0.3,B:35:1:0.3"`` -> class recipes (label:period:amplitude:noise)."""
    out = []
    for chunk in text.split(","):
        parts = chunk.strip().split(":")
        if len(parts) != 4:
            raise ValueError(f"class recipe {chunk!r} is not label:period:amplitude:noise")
        out.append(ClassRecipe(parts[0], float(parts[1]), float(parts[2]), float(parts[3])))
    return tuple(out)


def _int_list(value) -> tuple:
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
    return tuple(int(v) for v in value)


@dataclass
class PipelineConfig:
    out_dir: str = "run"
    manifest: str | None = None
    classes: str = "A:20:1:0.3,B:35:1:0.3"
    subjects_per_class: int = 10
    timepoints: int = 140
    rois: int = 18
    network: str | None = None
    stages: tuple = STAGES
    M: int = 2
    tau: int = 1
    zscore: bool = False
    max_dim: int = 2
    threshold: float | None = None
    dims: tuple = (0, 1, 2)
    q: float = 2.0
    essential_policy: str = "drop"
    ps: bool = False
    alpha: float = 0.01
    bonferroni: bool = False
    train_dims: tuple = (0,)
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 8
    test_fraction: float = 0.2
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        self.stages = tuple(self.stages.split(",")) if isinstance(self.stages, str) else tuple(self.stages)
        self.dims = _int_list(self.dims)
        self.train_dims = _int_list(self.train_dims)
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stages {unknown}; expected a subset of {STAGES}")
        # parameter objects validate their own ranges
        self.embedding = EmbeddingParams(self.M, self.tau, self.zscore)
        self.filtration = FiltrationParams(self.max_dim, self.threshold)
        self.wasserstein = WassersteinParams(self.q, self.essential_policy)
        self.train_config = TrainConfig(self.epochs, self.lr, self.batch_size, self.test_fraction, self.seed)
        for k in self.dims + self.train_dims:
            if k not in (0, 1, 2):
                raise ValueError(f"homology dimension must be 0, 1 or 2, got {k}")
            if k > self.max_dim:
                raise ValueError(f"dimension {k} exceeds max_dim={self.max_dim}")
        if not set(self.train_dims) <= set(self.dims):
            raise ValueError("train_dims must be a subset of dims")
        if self.manifest is None:
            self.synthetic_spec = SyntheticSpec(parse_classes(self.classes), self.subjects_per_class, self.timepoints, self.rois)
        else:
            self.synthetic_spec = None
            if not Path(self.manifest).is_file():
                raise ValueError(f"manifest not found: {self.manifest}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, kinds[key])
        return cls(**kwargs)


def _coerce(key, raw, kind):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if kind == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if text.lower() in ("none", ""):
        return None
    if kind == "int":
        return int(text)
    if kind in ("float", "float | None"):
        return math.inf if text.lower() == "inf" else float(text)
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        else:
            h.update(json.dumps(p, sort_keys=True, default=str).encode())
        h.update(b"|")
    return h.hexdigest()[:32]


def stage_seed(root: int, stage: str) -> int:
    return int(np.random.SeedSequence([int(root), STAGES.index(stage)]).generate_state(1)[0])


@dataclass
class RunResult:
    status: int
    artifacts: list = field(default_factory=list)  # dicts: path, stage, key
    cache_hits: int = 0
    computed: int = 0
    outputs: dict = field(default_factory=dict)
    provenance: list = field(default_factory=list)

    @property
    def artifact_count(self) -> int:
        return len(self.artifacts)


class _Stage:
    """Provenance bookkeeping for one stage directory."""

    def __init__(self, result: RunResult, root: Path, name: str, params: dict, seed: int | None = None):
        self.result = result
        self.root = root
        self.name = name
        self.dir = root / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prov_path = self.dir / "provenance.json"
        old = json.loads(self.prov_path.read_text()) if self.prov_path.is_file() else {}
        self.old_entries = old.get("entries", {})
        self.entries = {}
        self.params = params
        self.seed = seed
        self._write(complete=False)

    def _write(self, complete: bool):
        record = {
            "stage": self.name,
            "params": self.params,
            "seed": self.seed,
            "complete": complete,
            "entries": self.entries if complete else {**self.old_entries, **self.entries},
        }
        self.prov_path.write_text(json.dumps(record, indent=1, sort_keys=True, default=str))

    def fresh(self, path: Path, key: str, companions=()) -> bool:
        rel = path.relative_to(self.root).as_posix()
        return path.is_file() and self.old_entries.get(rel) == key and all(Path(c).is_file() for c in companions)

    def record(self, path: Path, key: str, hit: bool, companions=()):
        """Log an artifact; ``companions`` are files written alongside it (sidecars)."""
        rel = path.relative_to(self.root).as_posix()
        self.entries[rel] = key
        art = {"path": rel, "stage": self.name, "key": key}
        if companions:
            art["companions"] = [Path(c).relative_to(self.root).as_posix() for c in companions]
        self.result.artifacts.append(art)
        if hit:
            self.result.cache_hits += 1
        else:
            self.result.computed += 1

    def close(self):
        self._write(complete=True)
        self.result.provenance.append(self.prov_path.relative_to(self.root).as_posix())


def _safe(name) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in str(name))


def run_pipeline(config: PipelineConfig) -> RunResult:
    """Run the selected stages in dependency order.

    Raises :class:`PipelineError` naming the stage and item on failure; the
    failing stage's provenance stays marked incomplete.
    """
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    result = RunResult(status=0)
    run_manifest = root / "run_manifest.json"

    cohort, cohort_key = _stage_cohort(config, root, result)
    network = cohort.network(config.network) if config.network else cohort.networks[0]
    result.outputs["network"] = network.name

    diagram_keys = {}
    if "persist" in config.stages or any(s in config.stages for s in ("distmat", "stats", "train")):
        diagram_keys, cache = _stage_persist(config, root, result, cohort, network)
    pr_paths = {}
    if any(s in config.stages for s in ("distmat", "stats", "train")):
        pr_paths = _stage_distmat(config, root, result, cohort, network, cache, diagram_keys)
    if "stats" in config.stages:
        _stage_stats(config, root, result, cohort, network, pr_paths)
    if "train" in config.stages:
        _stage_train(config, root, result, cohort, network, pr_paths)

    run_manifest.write_text(json.dumps({
        "config": config.as_dict(),
        "cohort_key": cohort_key,
        "artifacts": result.artifacts,
        "cache_hits": result.cache_hits,
        "computed": result.computed,
        "provenance": result.provenance,
    }, indent=1, default=str))
    return result


def _stage_cohort(config, root, result):
    seed = stage_seed(config.seed, "cohort")
    if config.manifest is not None:
        try:
            cohort = load_cohort(config.manifest)
        except Exception as exc:
            raise PipelineError("cohort", config.manifest, exc) from exc
        params = {"manifest": str(config.manifest)}
    else:
        cohort = None
        params = {"synthetic": asdict(config.synthetic_spec)}
    stage = _Stage(result, root, "cohort", params, seed)
    if cohort is None:
        key = _digest(params, seed)
        manifest = stage.dir / "manifest.json"
        hit = stage.fresh(manifest, key)
        if hit:
            try:
                cohort = load_cohort(manifest)
            except (OSError, ValueError):
                hit = False
        if not hit:
            try:
                cohort = generate_synthetic_cohort(config.synthetic_spec, seed)
            except Exception as exc:
                raise PipelineError("cohort", "synthetic spec", exc) from exc
            write_cohort(cohort, stage.dir)
        subject_files = [stage.dir / "subjects" / f"{s.subject_id}.csv" for s in cohort.subjects]
        stage.record(manifest, key, hit, subject_files)
    else:
        key = _digest([(s.subject_id, s.label, [(r, ts.values) for r, ts in s.series.items()]) for s in cohort.subjects])
    labels = stage.dir / "labels.csv"
    label_key = _digest(key, [(s.subject_id, s.label) for s in cohort.subjects])
    hit = stage.fresh(labels, label_key)
    if not hit:
        labels.write_text("subject_id,label\n" + "".join(f"{s.subject_id},{s.label}\n" for s in cohort.subjects))
    stage.record(labels, label_key, hit)
    stage.close()
    return cohort, key


def _stage_persist(config, root, result, cohort, network):
    params = {"embedding": config.embedding.describe(), "filtration": config.filtration.describe()}
    stage = _Stage(result, root, "diagrams", params)
    cache = DiagramCache(stage.dir / network.name)
    keys = {}
    tasks = [(s, roi) for s in cohort.subjects for roi in network.roi_labels]

    def work(task):
        subj, roi = task
        try:
            cache.get(subj.subject_id, roi, subj.series[roi].values, config.embedding, config.filtration)
        except Exception as exc:
            raise PipelineError("persist", f"subject {subj.subject_id!r}, ROI {roi!r}", exc) from exc

    before_computed = cache.computed
    if config.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(config.jobs) as pool:
            list(pool.map(work, tasks))
    else:
        for t in tasks:
            work(t)
    for subj, roi in tasks:
        csv_path, key_path = cache._path(subj.subject_id, roi, None)
        key = _digest(subj.series[roi].values, params)
        keys[(subj.subject_id, roi)] = key
        hit = stage.fresh(csv_path, key, [key_path])
        stage.record(csv_path, key, hit, [key_path])
    log.info("persist: %d computed, %d from disk", cache.computed - before_computed, cache.disk_hits)
    stage.close()
    return keys, cache


def _stage_distmat(config, root, result, cohort, network, cache, diagram_keys):
    params = {"wasserstein": config.wasserstein.describe(), "dims": list(config.dims)}
    stage = _Stage(result, root, "matrices", params)
    pr_paths = {}
    meta_common = {
        **config.wasserstein.describe(),
        "network": network.name,
        "embedding": config.embedding.describe(),
        "filtration": config.filtration.describe(),
    }

    def diagrams_for(subj, roi):
        return cache.get(subj.subject_id, roi, subj.series[roi].values, config.embedding, config.filtration)

    for k in config.dims:
        for subj in cohort.subjects:
            path = stage.dir / "roi" / _safe(network.name) / str(k) / f"{_safe(subj.subject_id)}.csv"
            key = _digest([diagram_keys[(subj.subject_id, r)] for r in network.roi_labels], params, k)
            hit = stage.fresh(path, key, [path.with_suffix(".json")])
            if not hit:
                try:
                    dgms = [diagrams_for(subj, r)[k] for r in network.roi_labels]
                    meta = {"mode": "PR", "dim": k, **meta_common, "subject": subj.subject_id, "label": subj.label}
                    save_matrix(distance_matrix_from_diagrams(network.roi_labels, dgms, config.wasserstein, meta, config.jobs), path)
                except Exception as exc:
                    raise PipelineError("distmat", f"PR subject {subj.subject_id!r}, H{k}", exc) from exc
            stage.record(path, key, hit, [path.with_suffix(".json")])
            pr_paths[(subj.subject_id, k)] = path
        if config.ps:
            for roi in network.roi_labels:
                path = stage.dir / "subject" / _safe(network.name) / str(k) / f"{_safe(roi)}.csv"
                key = _digest([diagram_keys[(s.subject_id, roi)] for s in cohort.subjects], params, k)
                hit = stage.fresh(path, key, [path.with_suffix(".json")])
                if not hit:
                    try:
                        dgms = [diagrams_for(s, roi)[k] for s in cohort.subjects]
                        meta = {"mode": "PS", "dim": k, **meta_common, "roi": roi, "subject_labels": cohort.labels}
                        save_matrix(distance_matrix_from_diagrams([s.subject_id for s in cohort.subjects], dgms,
                                                                  config.wasserstein, meta, config.jobs), path)
                    except Exception as exc:
                        raise PipelineError("distmat", f"PS ROI {roi!r}, H{k}", exc) from exc
                stage.record(path, key, hit, [path.with_suffix(".json")])
    stage.close()
    return pr_paths


def _stage_stats(config, root, result, cohort, network, pr_paths):
    classes = cohort.classes
    if len(classes) != 2:
        log.warning("stats stage needs exactly two classes, found %s; skipped", classes)
        return
    a, b = classes
    params = {"alpha": config.alpha, "bonferroni": config.bonferroni, "groups": [a, b]}
    stage = _Stage(result, root, "pmap", params)
    for k in config.dims:
        path = stage.dir / f"{_safe(a)}_vs_{_safe(b)}" / _safe(network.name) / f"H{k}.csv"
        key = _digest([stage_key(result, pr_paths[(s.subject_id, k)], root) for s in cohort.subjects], params)
        hit = stage.fresh(path, key)
        if not hit:
            try:
                ga = [load_matrix(pr_paths[(s.subject_id, k)]) for s in cohort.subjects if s.label == a]
                gb = [load_matrix(pr_paths[(s.subject_id, k)]) for s in cohort.subjects if s.label == b]
                save_significance_map(significance_map(ga, gb, config.alpha, config.bonferroni), path)
            except Exception as exc:
                raise PipelineError("stats", f"H{k}", exc) from exc
        stage.record(path, key, hit)
        result.outputs[f"pmap_H{k}"] = str(path)
    stage.close()


def stage_key(result: RunResult, path: Path, root: Path) -> str:
    rel = path.relative_to(root).as_posix()
    for art in reversed(result.artifacts):
        if art["path"] == rel:
            return art["key"]
    raise KeyError(rel)


def _stage_train(config, root, result, cohort, network, pr_paths):
    seed = stage_seed(config.seed, "train")
    tc = TrainConfig(config.epochs, config.lr, config.batch_size, config.test_fraction, seed)
    params = {"train": asdict(tc)}
    stage = _Stage(result, root, "models", params, seed)
    for k in config.train_dims:
        out = stage.dir / _safe(network.name) / f"H{k}"
        model_path = out / "model.npz"
        metrics_path = out / "metrics.json"
        key = _digest([stage_key(result, pr_paths[(s.subject_id, k)], root) for s in cohort.subjects], params, cohort.labels)
        hit = stage.fresh(model_path, key) and stage.fresh(metrics_path, key)
        if not hit:
            try:
                data = [(load_matrix(pr_paths[(s.subject_id, k)]), s.label) for s in cohort.subjects]
                model, metrics = train(data, tc)
                model.meta.update({"network": network.name, "dim": k})
                save_model(model, model_path)
                metrics["subjects"] = [s.subject_id for s in cohort.subjects]
                metrics_path.write_text(json.dumps(metrics, indent=1, default=str))
            except Exception as exc:
                raise PipelineError("train", f"H{k}", exc) from exc
        stage.record(model_path, key, hit)
        stage.record(metrics_path, key, hit)
        result.outputs[f"model_H{k}"] = str(model_path)
    stage.close()
