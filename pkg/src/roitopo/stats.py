"""Group comparison of PR matrix entries with the Wilcoxon rank-sum test."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

__all__ = ["TestResult", "SignificanceMap", "wilcoxon_rank_sum", "significance_map", "save_significance_map", "load_significance_map"]

EXACT_MAX_TOTAL = 10


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float  # U of the first sample
    p_value: float
    n_a: int
    n_b: int
    method: str


def _exact_p(u: float, n_a: int, n_b: int) -> float:
    total = n_a + n_b
    offset = n_a * (n_a + 1) / 2
    counts = {}
    for combo in itertools.combinations(range(1, total + 1), n_a):
        key = sum(combo) - offset
        counts[key] = counts.get(key, 0) + 1
    n_arr = math.comb(total, n_a)
    lower = sum(c for k, c in counts.items() if k <= u) / n_arr
    upper = sum(c for k, c in counts.items() if k >= u) / n_arr
    return min(1.0, 2 * min(lower, upper))


def _normal_p(u: float, n_a: int, n_b: int, tie_counts=None) -> float:
    total = n_a + n_b
    mean = n_a * n_b / 2
    tie_term = 0.0
    if tie_counts is not None and total > 1:
        t = np.asarray(tie_counts, dtype=float)
        tie_term = float(np.sum(t ** 3 - t)) / (total * (total - 1))
    var = n_a * n_b / 12 * ((total + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = max(abs(u - mean) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, 2 * float(ndtr(-z)))


def wilcoxon_rank_sum(a, b) -> TestResult:
    """Two-sided rank-sum (Mann-Whitney) test of ``a`` against ``b``.

    Exact null distribution when there are no ties and at most 10 values in
    total; otherwise the normal approximation with tie-corrected variance and
    a 0.5 continuity correction.  Ties get midranks.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    n_a, n_b = a.size, b.size
    total = n_a + n_b
    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2)
    _, tie_counts = np.unique(ranks, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))

    if total <= EXACT_MAX_TOTAL and not has_ties:
        return TestResult(u, _exact_p(u, n_a, n_b), n_a, n_b, "exact")

    return TestResult(u, _normal_p(u, n_a, n_b, tie_counts), n_a, n_b, "normal")


@dataclass
class SignificanceMap:
    network: str
    dim: int
    alpha: float
    entries: list = field(default_factory=list)  # (roi_i, roi_j, U, p, significant)
    bonferroni: bool = False

    @property
    def significant_pairs(self) -> list:
        return [(e[0], e[1]) for e in self.entries if e[4]]

    def p_matrix(self, labels) -> np.ndarray:
        """Square matrix of p-values (ones on the diagonal), the P-plot."""
        index = {lab: i for i, lab in enumerate(labels)}
        out = np.ones((len(labels), len(labels)))
        for ri, rj, _, p, _ in self.entries:
            out[index[ri], index[rj]] = out[index[rj], index[ri]] = p
        return out


def _check_consistent(matrices):
    ref = matrices[0]
    for m in matrices[1:]:
        if m.labels != ref.labels:
            raise ValueError("PR matrices disagree on ROI labels or their order")
        if m.meta.get("dim") != ref.meta.get("dim"):
            raise ValueError(f"mixed homology dimensions: {ref.meta.get('dim')} and {m.meta.get('dim')}")
        for key in ("q", "essential_policy", "network", "mode"):
            if m.meta.get(key) != ref.meta.get(key):
                raise ValueError(f"PR matrices disagree on {key!r}: {ref.meta.get(key)!r} vs {m.meta.get(key)!r}")


def significance_map(group_a, group_b, alpha: float = 0.01, bonferroni: bool = False) -> SignificanceMap:
    """Rank-sum test on every unordered ROI pair of two groups of PR matrices.

    Each subject contributes one value per pair.  ``significant`` means
    ``p < alpha`` (``alpha / n_pairs`` with ``bonferroni``).
    """
    group_a, group_b = list(group_a), list(group_b)
    if len(group_a) < 2 or len(group_b) < 2:
        raise ValueError("each group needs at least 2 matrices")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    _check_consistent(group_a + group_b)
    labels = group_a[0].labels
    n = len(labels)
    stack_a = np.stack([m.values for m in group_a])
    stack_b = np.stack([m.values for m in group_b])
    n_pairs = n * (n - 1) // 2
    cut = alpha / n_pairs if bonferroni and n_pairs else alpha
    entries = []
    for i in range(n):
        for j in range(i + 1, n):
            res = wilcoxon_rank_sum(stack_a[:, i, j], stack_b[:, i, j])
            entries.append((labels[i], labels[j], res.statistic, res.p_value, res.p_value < cut))
    meta = group_a[0].meta
    return SignificanceMap(meta.get("network") or "", int(meta.get("dim", -1)), alpha, entries, bonferroni)


def save_significance_map(smap: SignificanceMap, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["roi_i", "roi_j", "U", "p_value", "significant"])
        for ri, rj, u, p, sig in smap.entries:
            w.writerow([ri, rj, repr(float(u)), repr(float(p)), int(bool(sig))])
    return path


def load_significance_map(path, network: str = "", dim: int = -1, alpha: float = 0.01) -> SignificanceMap:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            entries.append((row["roi_i"], row["roi_j"], float(row["U"]), float(row["p_value"]), row["significant"] == "1"))
    return SignificanceMap(network, dim, alpha, entries)
