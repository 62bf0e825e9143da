"""Command-line interface: ``roitopo <subcommand> ...``.

Subcommands mirror the pipeline stages (``synth``, ``ingest``, ``embed``,
``persist``, ``distmat``, ``stats``, ``train``, ``eval``) plus ``run`` for the
whole chain.  Global flags ``--jobs``, ``--seed`` and ``--config`` go before
the subcommand.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .distance import WassersteinParams
from .embed import EmbeddingParams, save_cloud, sliding_window_embed
from .homology import FiltrationParams, compute_persistence, load_diagrams, save_diagrams
from .ingest import SyntheticSpec, atlas_network, generate_synthetic_cohort, load_cohort, write_cohort
from .learn import TrainConfig, evaluate, load_model, save_model, train
from .matrices import distance_matrix_from_diagrams, load_matrix, save_matrix
from .pipeline import PipelineConfig, PipelineError, parse_classes, read_config_file, run_pipeline
from .stats import save_significance_map, significance_map

log = logging.getLogger("roitopo")


def _safe(name) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in str(name))


def _network(cohort, name):
    if name is None:
        return cohort.networks[0]
    try:
        return cohort.network(name)
    except KeyError:
        return atlas_network(name)


def _threshold(text):
    return None if text in (None, "auto") else float(text)


def _q(text):
    return math.inf if str(text).lower() == "inf" else float(text)


def _read_labels(path) -> dict:
    with open(path, newline="") as fh:
        return {row["subject_id"]: row["label"] for row in csv.DictReader(fh)}


def _write_labels(cohort, directory):
    path = Path(directory) / "labels.csv"
    path.write_text("subject_id,label\n" + "".join(f"{s.subject_id},{s.label}\n" for s in cohort.subjects))


def cmd_synth(args):
    spec = SyntheticSpec(parse_classes(args.classes), args.subjects_per_class, args.timepoints, args.rois)
    cohort = generate_synthetic_cohort(spec, args.seed)
    manifest = write_cohort(cohort, args.out)
    _write_labels(cohort, args.out)
    print(manifest)


def cmd_ingest(args):
    cohort = load_cohort(args.manifest)
    summary = {
        "subjects": len(cohort),
        "classes": {c: cohort.labels.count(c) for c in cohort.classes},
        "networks": {n.name: n.size for n in cohort.networks},
        "timepoints": sorted({s.length for s in cohort.subjects}),
    }
    if args.out:
        write_cohort(cohort, args.out)
        _write_labels(cohort, args.out)
    print(json.dumps(summary, indent=1))


def cmd_embed(args):
    cohort = load_cohort(args.manifest)
    net = _network(cohort, args.network)
    params = EmbeddingParams(args.M, args.tau, args.zscore)
    out = Path(args.out)
    for subj in cohort.subjects:
        for roi in net.roi_labels:
            save_cloud(sliding_window_embed(subj.series[roi].values, params), out / _safe(subj.subject_id) / f"{_safe(roi)}.csv")
    print(out)


def _persist_one(task):
    subj_id, roi, values, eparams, fparams, out = task
    dgms = compute_persistence(sliding_window_embed(values, eparams), fparams)
    save_diagrams(dgms, out / _safe(subj_id) / f"{_safe(roi)}.csv")
    return dgms[0].threshold


def cmd_persist(args):
    cohort = load_cohort(args.manifest)
    net = _network(cohort, args.network)
    eparams = EmbeddingParams(args.M, args.tau, args.zscore)
    fparams = FiltrationParams(args.max_dim, _threshold(args.threshold))
    out = Path(args.out)
    tasks = [(s.subject_id, r, s.series[r].values, eparams, fparams, out) for s in cohort.subjects for r in net.roi_labels]
    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(args.jobs) as pool:
            thresholds = list(pool.map(_persist_one, tasks))
    else:
        thresholds = [_persist_one(t) for t in tasks]
    index = {
        "network": net.name,
        "roi_labels": list(net.roi_labels),
        "subjects": [{"id": s.subject_id, "label": s.label} for s in cohort.subjects],
        "embedding": eparams.describe(),
        "filtration": fparams.describe(),
        "thresholds": {f"{t[0]}/{t[1]}": th for t, th in zip(tasks, thresholds)},
    }
    (out / "index.json").write_text(json.dumps(index, indent=1))
    print(out)


def cmd_distmat(args):
    src = Path(args.input)
    index = json.loads((src / "index.json").read_text())
    if args.network and args.network != index["network"]:
        raise SystemExit(f"diagrams in {src} are for network {index['network']!r}, not {args.network!r}")
    params = WassersteinParams(_q(args.q), args.essential_policy)
    max_dim = index["filtration"]["max_dim"]
    if args.dim > max_dim:
        raise SystemExit(f"dimension {args.dim} was not computed (max_dim={max_dim})")
    rois = index["roi_labels"]
    subjects = index["subjects"]

    def dgm(sid, roi):
        return load_diagrams(src / _safe(sid) / f"{_safe(roi)}.csv", max_dim, index["thresholds"][f"{sid}/{roi}"])[args.dim]

    base = {**params.describe(), "dim": args.dim, "network": index["network"],
            "embedding": index["embedding"], "filtration": index["filtration"]}
    out = Path(args.out)
    if args.mode == "roi":
        for s in subjects:
            meta = {**base, "mode": "PR", "subject": s["id"], "label": s["label"]}
            m = distance_matrix_from_diagrams(rois, [dgm(s["id"], r) for r in rois], params, meta, args.jobs)
            save_matrix(m, out / "roi" / _safe(index["network"]) / str(args.dim) / f"{_safe(s['id'])}.csv")
    else:
        for r in rois:
            meta = {**base, "mode": "PS", "roi": r, "subject_labels": [s["label"] for s in subjects]}
            m = distance_matrix_from_diagrams([s["id"] for s in subjects], [dgm(s["id"], r) for s in subjects], params, meta, args.jobs)
            save_matrix(m, out / "subject" / _safe(index["network"]) / str(args.dim) / f"{_safe(r)}.csv")
    print(out)


def _load_dir(path):
    return [load_matrix(p) for p in sorted(Path(path).glob("*.csv"))]


def cmd_stats(args):
    ga, gb = _load_dir(args.group_a), _load_dir(args.group_b)
    smap = significance_map(ga, gb, args.alpha, args.bonferroni)
    name = args.name or f"{Path(args.group_a).name}_vs_{Path(args.group_b).name}"
    path = save_significance_map(smap, Path(args.out) / name / _safe(smap.network or "network") / f"H{smap.dim}.csv")
    print(f"{path}: {len(smap.significant_pairs)} of {len(smap.entries)} ROI pairs with p < {args.alpha}")


def _labelled_matrices(matrix_dir, labels_csv):
    labels = _read_labels(labels_csv)
    data = []
    for p in sorted(Path(matrix_dir).glob("*.csv")):
        m = load_matrix(p)
        sid = m.meta.get("subject", p.stem)
        if sid in labels:
            data.append((m, labels[sid]))
    if not data:
        raise SystemExit(f"no matrices in {matrix_dir} match subjects in {labels_csv}")
    return data


def cmd_train(args):
    matrix_dir = Path(args.matrices)
    if args.network is not None and args.dim is not None and (matrix_dir / "roi").is_dir():
        matrix_dir = matrix_dir / "roi" / _safe(args.network) / str(args.dim)
    data = _labelled_matrices(matrix_dir, args.labels)
    out = Path(args.out)
    summaries = []
    for r in range(args.repeats):
        config = TrainConfig(args.epochs, args.lr, args.batch_size, args.test_fraction, args.seed + r)
        model, metrics = train(data, config)
        summaries.append(metrics.get("test_accuracy"))
        if r == 0:
            model.meta.update({"network": args.network, "dim": args.dim})
            save_model(model, out / "model.npz")
            (out / "metrics.json").write_text(json.dumps(metrics, indent=1, default=str))
    report = {"test_accuracy": summaries[0]}
    if args.repeats > 1:
        accs = [a for a in summaries if a is not None]
        report.update({"repeats": args.repeats, "mean_test_accuracy": float(np.mean(accs)), "std_test_accuracy": float(np.std(accs))})
    print(json.dumps(report))


def cmd_eval(args):
    model_path = Path(args.model)
    if model_path.is_dir():
        model_path = model_path / "model.npz"
    model = load_model(model_path)
    data = _labelled_matrices(args.matrices, args.labels)
    print(json.dumps(evaluate(model, data), indent=1))


def cmd_run(args, config_map):
    overrides = {k: v for k, v in {
        "out_dir": args.out, "manifest": args.manifest, "network": args.network, "stages": args.stages,
        "dims": args.dims, "train_dims": args.train_dims, "epochs": args.epochs, "q": args.q,
    }.items() if v is not None}
    merged = {**config_map, **overrides, "seed": args.seed, "jobs": args.jobs}
    config = PipelineConfig.from_mapping(merged)
    result = run_pipeline(config)
    print(json.dumps({"artifacts": result.artifact_count, "cache_hits": result.cache_hits,
                      "computed": result.computed, "outputs": result.outputs}, indent=1))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roitopo", description=__doc__.splitlines()[0])
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="root random seed")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic cohort")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", default="A:20:1:0.3,B:35:1:0.3", help="label:period:amplitude:noise,...")
    s.add_argument("--subjects-per-class", type=int, default=10)
    s.add_argument("--timepoints", type=int, default=140)
    s.add_argument("--rois", type=int, default=18)

    s = sub.add_parser("ingest", help="validate a cohort manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="write a normalized copy here")

    def add_embed(sp):
        sp.add_argument("--manifest", required=True)
        sp.add_argument("--network")
        sp.add_argument("--M", type=int, default=2)
        sp.add_argument("--tau", type=int, default=1)
        sp.add_argument("--zscore", action="store_true")
        sp.add_argument("--out", required=True)

    add_embed(sub.add_parser("embed", help="write sliding-window point clouds"))
    s = sub.add_parser("persist", help="compute persistence diagrams")
    add_embed(s)
    s.add_argument("--max-dim", type=int, default=2, choices=(0, 1, 2))
    s.add_argument("--threshold", default="auto")

    s = sub.add_parser("distmat", help="build PR or PS Wasserstein matrices")
    s.add_argument("--mode", choices=("roi", "subject"), required=True)
    s.add_argument("--network")
    s.add_argument("--dim", type=int, choices=(0, 1, 2), required=True)
    s.add_argument("--q", default="2")
    s.add_argument("--essential-policy", choices=("drop", "cap_at_threshold"), default="drop")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("stats", help="rank-sum P-plot between two groups of PR matrices")
    s.add_argument("--group-a", required=True)
    s.add_argument("--group-b", required=True)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--bonferroni", action="store_true")
    s.add_argument("--name")
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="train the hybrid CNN on PR matrices")
    s.add_argument("--network")
    s.add_argument("--dim", type=int, choices=(0, 1, 2))
    s.add_argument("--matrices", required=True)
    s.add_argument("--labels", required=True, help="CSV with subject_id,label")
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.add_argument("--repeats", type=int, default=1, help="extra seeds for a multi-split summary")
    s.add_argument("--out", required=True)

    s = sub.add_parser("eval", help="evaluate a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--matrices", required=True)
    s.add_argument("--labels", required=True)

    s = sub.add_parser("run", help="run the full pipeline")
    s.add_argument("--out")
    s.add_argument("--manifest")
    s.add_argument("--network")
    s.add_argument("--stages")
    s.add_argument("--dims")
    s.add_argument("--train-dims")
    s.add_argument("--epochs")
    s.add_argument("--q")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    config_map = read_config_file(args.config) if args.config else {}
    if args.seed is None:
        args.seed = int(config_map.get("seed", 0))
    if "jobs" in config_map and args.jobs == 1:
        args.jobs = int(config_map["jobs"])
    handlers = {
        "synth": cmd_synth, "ingest": cmd_ingest, "embed": cmd_embed, "persist": cmd_persist,
        "distmat": cmd_distmat, "stats": cmd_stats, "train": cmd_train, "eval": cmd_eval,
    }
    try:
        if args.command == "run":
            cmd_run(args, config_map)
        else:
            handlers[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
