"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from roitopo.distance import WassersteinParams, bottleneck_distance, wasserstein_distance
from roitopo.embed import sliding_window_embed
from roitopo.homology import FiltrationParams, compute_persistence, oracle_persistence
from roitopo.ingest import ClassRecipe, SyntheticSpec, generate_synthetic_cohort
from roitopo.learn import TrainConfig, gradient_check, init_model, knn_baseline, train
from roitopo.matrices import DiagramCache, pairwise_roi_matrix
from roitopo.stats import significance_map

from conftest import ACCEPTANCE, random_diagram
from oracles import brute_wasserstein


def report(name, ok, detail):
    ACCEPTANCE.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def same_diagrams(a, b, tol=1e-9):
    for x, y in zip(a, b):
        if x.pairs.shape != y.pairs.shape or not np.array_equal(np.isinf(x.pairs), np.isinf(y.pairs)):
            return False
        fin = np.isfinite(x.pairs)
        if not np.allclose(x.pairs[fin], y.pairs[fin], atol=tol, rtol=0):
            return False
    return len(a) == len(b)


def test_oracle_equivalence():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    mismatches = 0
    n_clouds = 120
    for _ in range(n_clouds):
        pts = rng.uniform(size=(int(rng.integers(4, 9)), 3))
        mismatches += not same_diagrams(compute_persistence(pts), oracle_persistence(pts))
    elapsed = time.perf_counter() - start
    report("oracle equivalence", mismatches == 0 and elapsed < 10,
           f"{n_clouds - mismatches}/{n_clouds} clouds match in H0-H2, {elapsed:.2f} s (limit 10 s)")


def test_known_topology_fixtures():
    square = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    tri = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
    h1_square = compute_persistence(square)[1].pairs
    h1_tri = compute_persistence(tri)[1].pairs
    two = compute_persistence([[0, 0, 0], [0.7, 0.2, 0.1]])[0]
    d = math.dist([0, 0, 0], [0.7, 0.2, 0.1])
    ok = (h1_square.shape == (1, 2) and np.allclose(h1_square[0], [1, math.sqrt(2)], atol=1e-9, rtol=0)
          and len(h1_tri) == 0
          and two.finite.shape == (1, 2) and abs(two.finite[0, 1] - d) <= 1e-9 and two.finite[0, 0] == 0)
    report("known-topology fixtures", ok,
           f"square H1 {h1_square.tolist()}, triangle H1 size {len(h1_tri)}, two-point H0 death {two.finite[0, 1]:.12f} vs {d:.12f}")


def test_stability():
    rng = np.random.default_rng(1)
    eps = 0.01
    worst = 0.0
    for _ in range(50):
        pts = rng.uniform(size=(int(rng.integers(10, 40)), 3))
        # every point moves by at most eps in the Euclidean norm
        step = rng.normal(size=pts.shape)
        step *= (eps * rng.uniform(size=(len(pts), 1))) / np.linalg.norm(step, axis=1, keepdims=True)
        a, b = compute_persistence(pts), compute_persistence(pts + step)
        for x, y in zip(a, b):
            worst = max(worst, bottleneck_distance(x, y))
    report("stability suite", worst <= 2 * eps + 1e-9, f"max bottleneck change {worst:.6f} over 50 clouds, H0-H2 (bound {2 * eps})")


def test_wasserstein_axioms():
    rng = np.random.default_rng(2)
    sym_err = tri_viol = 0.0
    for _ in range(500):
        X, Y, Z = (random_diagram(rng, int(rng.integers(0, 12))) for _ in range(3))
        xy, yx = wasserstein_distance(X, Y), wasserstein_distance(Y, X)
        sym_err = max(sym_err, abs(xy - yx))
        tri_viol = max(tri_viol, wasserstein_distance(X, Z) - xy - wasserstein_distance(Y, Z))
    brute_err = 0.0
    for _ in range(200):
        X, Y = random_diagram(rng, int(rng.integers(0, 7))), random_diagram(rng, int(rng.integers(0, 7)))
        for q in (1.0, 2.0):
            brute_err = max(brute_err, abs(wasserstein_distance(X, Y, WassersteinParams(q=q)) - brute_wasserstein(X, Y, q)))
    ok = sym_err <= 1e-9 and tri_viol <= 1e-9 and brute_err <= 1e-9
    report("Wasserstein metric axioms", ok,
           f"500 triples: symmetry err {sym_err:.1e}, triangle violation {max(tri_viol, 0):.1e}; "
           f"brute force (<= 6 points, 200 pairs) max err {brute_err:.1e}")


def test_periodicity_signature():
    # every integer period 4..40 with at least 3 full periods (140 samples or more)
    failing = []
    for period in range(4, 41):
        t = np.arange(max(140, 3 * period + 2))
        h1 = compute_persistence(sliding_window_embed(np.sin(2 * np.pi * t / period)), FiltrationParams(1))[1]
        pers = np.sort(h1.persistence)[::-1]
        ratio = math.inf if len(pers) < 2 or pers[1] == 0 else pers[0] / pers[1]
        if ratio < 5:
            failing.append(f"{period}:{ratio:.2f}")
    report("periodicity signature", not failing,
           f"{37 - len(failing)}/37 periods give top/second H1 persistence >= 5; below: {', '.join(failing) or 'none'}")


def test_gradient_fidelity():
    worst = raw_worst = 0.0
    checked = kinks = 0
    for draw in range(10):
        rng = np.random.default_rng(100 + draw)
        n = int(rng.integers(6, 11))
        a = rng.random((n, n))
        x = a + a.T
        np.fill_diagonal(x, 0)
        model, sample = init_model(n, 2, seed=draw), (x, int(draw % 2))
        err, c, k = gradient_check(model, sample, seed=draw, return_details=True)
        worst, checked, kinks = max(worst, err), checked + c, kinks + k
        raw_worst = max(raw_worst, gradient_check(model, sample, seed=draw, skip_kinks=False))

    def corrupt(grads):
        grads["dense3.b"] += 0.1

    caught = gradient_check(init_model(8, 2, seed=0), (x[:8, :8], 0), grad_hook=corrupt)
    report("gradient fidelity", worst < 1e-4 and caught > 1e-2,
           f"max relative error {worst:.2e} over 10 draws (< 1e-4; {checked} entries, {kinks} kink crossings skipped, "
           f"{raw_worst:.1e} with them); corrupted bias gradient reports {caught:.3f} (> 1e-2)")


@pytest.fixture(scope="module")
def end_to_end_cohort():
    spec = SyntheticSpec((ClassRecipe("A", 20, 1.0, 0.3), ClassRecipe("B", 35, 1.0, 0.3)),
                         subjects_per_class=25, timepoints=140, rois_per_network=18)
    cohort = generate_synthetic_cohort(spec, 2025)
    cache = DiagramCache()
    net = cohort.networks[0]
    mats = [pairwise_roi_matrix(s, net, 0, cache=cache, filtration=FiltrationParams(0)) for s in cohort.subjects]
    return cohort, mats


def test_overfit_check():
    spec = SyntheticSpec((ClassRecipe("A", 20, 1.0, 0.3), ClassRecipe("B", 35, 1.0, 0.3)),
                         subjects_per_class=4, timepoints=140, rois_per_network=18)
    cohort = generate_synthetic_cohort(spec, 8)
    net = cohort.networks[0]
    data = [(pairwise_roi_matrix(s, net, 0, filtration=FiltrationParams(0)), s.label) for s in cohort.subjects]
    _, metrics = train(data, TrainConfig(epochs=100, test_fraction=0.0, seed=0))
    report("overfit check", metrics["train_accuracy"] == 1.0,
           f"8 synthetic PR matrices, 100 epochs: training accuracy {metrics['train_accuracy']:.2f}, "
           f"loss {metrics['initial_loss']:.3f} -> {metrics['loss'][-1]:.4f}")


def test_end_to_end_classification(end_to_end_cohort):
    cohort, mats = end_to_end_cohort
    data = list(zip(mats, cohort.labels))
    _, metrics = train(data, TrainConfig(epochs=100, seed=0))
    train_set = [data[i] for i in metrics["train_index"]]
    knn_hits = [knn_baseline(train_set, data[i][0], 3) == data[i][1] for i in metrics["test_index"]]
    hybrid, knn = metrics["test_accuracy"], float(np.mean(knn_hits))
    report("end-to-end synthetic classification", hybrid >= 0.9 and knn >= 0.85,
           f"held-out accuracy hybrid {hybrid:.2f} (need 0.90), 3-NN {knn:.2f} (need 0.85; per-op example 0.90) "
           f"on {len(metrics['test_index'])} test subjects")


def test_significance_sensitivity(end_to_end_cohort):
    cohort, mats = end_to_end_cohort
    pool = [m for m, lab in zip(mats, cohort.labels) if lab == "A"]
    rng = np.random.default_rng(3)
    labels = pool[0].labels
    missed, false_flags = 0, 0
    for _ in range(20):
        order = rng.permutation(len(pool))
        ga = [pool[i] for i in order[:12]]
        gb = [pool[i] for i in order[12:24]]
        i, j = sorted(rng.choice(len(labels), size=2, replace=False))
        sigma = np.std([m.values[i, j] for m in ga + gb], ddof=1)
        shifted = []
        for m in gb:
            v = m.values.copy()
            v[i, j] += 10 * sigma
            v[j, i] += 10 * sigma
            shifted.append(type(m)(m.labels, v, m.meta))
        smap = significance_map(ga, shifted, alpha=0.01)
        missed += (labels[i], labels[j]) not in smap.significant_pairs
        false_flags += len(significance_map(ga, ga, alpha=0.01).significant_pairs)
    report("significance-map sensitivity", missed == 0 and false_flags == 0,
           f"20 trials: +10 sigma shift missed {missed} times; identical-group comparisons flagged {false_flags} pairs")


def test_throughput():
    rng = np.random.default_rng(4)
    t = np.arange(140)
    cloud = sliding_window_embed(np.sin(2 * np.pi * t / 20) + 0.3 * rng.normal(size=140))
    start = time.perf_counter()
    compute_persistence(cloud, FiltrationParams(2))
    h2_time = time.perf_counter() - start

    spec = SyntheticSpec((ClassRecipe("A", 20, 1.0, 0.3), ClassRecipe("B", 35, 1.0, 0.3)),
                         subjects_per_class=1, timepoints=140, rois_per_network=34)
    subj = generate_synthetic_cohort(spec, 5).subjects[0]
    from roitopo.ingest import NetworkDescriptor
    net = NetworkDescriptor("default_mode_sized", tuple(sorted(subj.series)))
    start = time.perf_counter()
    m = pairwise_roi_matrix(subj, net, 0, filtration=FiltrationParams(0), jobs=8)
    pr_time = time.perf_counter() - start
    report("throughput", h2_time < 10 and pr_time < 60 and m.values.shape == (34, 34),
           f"138-point H0-H2 persistence {h2_time:.2f} s (< 10 s); 34x34 H0 PR matrix, 8 workers, {pr_time:.1f} s (< 60 s)")
