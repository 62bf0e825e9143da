import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import mannwhitneyu

from roitopo.matrices import DistanceMatrix
from roitopo.stats import (
    _exact_p,
    _normal_p,
    load_significance_map,
    save_significance_map,
    significance_map,
    wilcoxon_rank_sum,
)

from oracles import exact_rank_sum_p


def test_identical_samples():
    r = wilcoxon_rank_sum([1, 2, 3], [1, 2, 3])
    assert r.p_value == 1.0
    assert r.statistic == 4.5


def test_exact_small_cases():
    assert exact_rank_sum_p([1, 2], [3, 4]) == pytest.approx(1 / 3)
    assert wilcoxon_rank_sum([1, 2], [3, 4]).p_value == pytest.approx(1 / 3, abs=1e-15)
    assert exact_rank_sum_p([1, 2, 3], [4, 5, 6]) == pytest.approx(0.1)
    r = wilcoxon_rank_sum([1, 2, 3], [4, 5, 6])
    assert r.p_value == pytest.approx(0.1, abs=1e-15)
    assert r.method == "exact" and r.statistic == 0


def test_empty_sample():
    with pytest.raises(ValueError):
        wilcoxon_rank_sum([], [1.0])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=10, unique=True), st.data())
def test_exact_path_against_enumeration(values, data):
    k = data.draw(st.integers(1, len(values) - 1))
    a, b = np.array(values[:k], float), np.array(values[k:], float)
    r = wilcoxon_rank_sum(a, b)
    assert r.p_value == pytest.approx(exact_rank_sum_p(a, b), abs=1e-12)
    assert r.p_value == pytest.approx(mannwhitneyu(a, b, method="exact").pvalue, abs=1e-12)
    assert 0 <= r.statistic <= len(a) * len(b)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=25),
       st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=25))
def test_symmetry(a, b):
    assert abs(wilcoxon_rank_sum(a, b).p_value - wilcoxon_rank_sum(b, a).p_value) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=11, max_size=40), st.data())
def test_normal_path_matches_scipy(values, data):
    k = data.draw(st.integers(1, len(values) - 1))
    a, b = np.array(values[:k], float), np.array(values[k:], float)
    if np.all(a[0] == np.concatenate([a, b])):
        return
    ours = wilcoxon_rank_sum(a, b).p_value
    ref = mannwhitneyu(a, b, method="asymptotic", use_continuity=True).pvalue
    assert ours == pytest.approx(ref, abs=1e-10)


def _envelope_gaps():
    """Worst |exact - normal| gap per (n_a, n_b) over every tie-free arrangement."""
    gaps = {}
    for total in range(2, 11):
        for n_a in range(1, total):
            worst = 0.0
            for u in range(n_a * (total - n_a) + 1):
                exact = _exact_p(u, n_a, total - n_a)
                worst = max(worst, abs(exact - _normal_p(u, n_a, total - n_a)))
            gaps[n_a, total - n_a] = worst
    return gaps


def test_exact_vs_normal_envelope():
    # the full stated scope; single-element samples and 2 vs 2 exceed 0.08
    # for any normal approximation, see the decisions ledger
    gaps = _envelope_gaps()
    bad = {k: round(v, 3) for k, v in gaps.items() if v >= 0.08}
    assert not bad, f"envelope exceeded for sizes {bad}"


def test_exact_vs_normal_envelope_nondegenerate():
    gaps = _envelope_gaps()
    ok = {k: v for k, v in gaps.items() if min(k) >= 2 and sum(k) >= 5}
    assert ok and max(ok.values()) < 0.08


def test_normal_helper_matches_scipy():
    a, b = np.arange(4.0), np.arange(4.0) + 2.5
    u = wilcoxon_rank_sum(a, b).statistic
    ref = mannwhitneyu(a, b, method="asymptotic", use_continuity=True).pvalue
    assert _normal_p(u, 4, 4) == pytest.approx(ref, abs=1e-12)


def _pr(values, labels, dim=0):
    return DistanceMatrix(labels, values, {"dim": dim, "network": "net", "mode": "PR", "q": 2.0, "essential_policy": "drop"})


def _group(rng, n_subjects, n, shift=None):
    out = []
    labels = [f"r{i}" for i in range(n)]
    for _ in range(n_subjects):
        a = rng.normal(1.0, 0.1, size=(n, n))
        v = np.abs(a + a.T)
        if shift:
            i, j, amount = shift
            v[i, j] += amount
            v[j, i] += amount
        np.fill_diagonal(v, 0)
        out.append(_pr(v, labels))
    return out


def test_same_groups_no_significance():
    g = _group(np.random.default_rng(1), 8, 6)
    smap = significance_map(g, g)
    assert smap.significant_pairs == []
    assert len(smap.entries) == 15


def test_shift_is_flagged():
    rng = np.random.default_rng(2)
    a = _group(rng, 12, 6)
    b = _group(rng, 12, 6, shift=(1, 4, 10 * 0.2))
    smap = significance_map(a, b)
    flagged = dict(((e[0], e[1]), e[3]) for e in smap.entries)
    assert flagged[("r1", "r4")] < 0.01
    assert ("r1", "r4") in smap.significant_pairs


def test_entry_count_for_dmn():
    rng = np.random.default_rng(3)
    smap = significance_map(_group(rng, 3, 34), _group(rng, 3, 34))
    assert len(smap.entries) == 561


def test_monotone_flagging():
    rng = np.random.default_rng(4)
    a, b = _group(rng, 10, 8), _group(rng, 10, 8, shift=(0, 1, 0.3))
    counts = [len(significance_map(a, b, alpha).significant_pairs) for alpha in (0.5, 0.2, 0.05, 0.01, 0.001)]
    assert counts == sorted(counts, reverse=True)


def test_bonferroni_is_stricter():
    rng = np.random.default_rng(5)
    a, b = _group(rng, 10, 8), _group(rng, 10, 8, shift=(0, 1, 0.15))
    raw = significance_map(a, b, 0.2)
    adj = significance_map(a, b, 0.2, bonferroni=True)
    assert set(adj.significant_pairs) <= set(raw.significant_pairs)


def test_mismatch_errors():
    rng = np.random.default_rng(6)
    a = _group(rng, 3, 4)
    b = _group(rng, 3, 4)
    b[0] = _pr(b[0].values, ["x", "r1", "r2", "r3"])
    with pytest.raises(ValueError, match="labels"):
        significance_map(a, b)
    c = _group(rng, 3, 4)
    c[1] = _pr(c[1].values, c[1].labels, dim=1)
    with pytest.raises(ValueError, match="dimension"):
        significance_map(a, c)
    with pytest.raises(ValueError):
        significance_map(a[:1], a)


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    smap = significance_map(_group(rng, 4, 5), _group(rng, 4, 5, shift=(0, 2, 5)))
    path = save_significance_map(smap, tmp_path / "pmap.csv")
    assert path.read_text().splitlines()[0] == "roi_i,roi_j,U,p_value,significant"
    back = load_significance_map(path)
    assert [e[:2] for e in back.entries] == [e[:2] for e in smap.entries]
    assert [e[3] for e in back.entries] == [e[3] for e in smap.entries]
    pm = smap.p_matrix(["r0", "r1", "r2", "r3", "r4"])
    assert np.array_equal(pm, pm.T)
