"""Numba kernels for Vietoris-Rips persistence over Z/2.

Simplices are addressed by an integer key ``rank * C(n, k+1) + colex`` where
``rank`` indexes the sorted distinct edge lengths and ``colex`` is the
combinatorial-number-system index of the sorted vertex set.  Sorting keys
therefore sorts simplices by (diameter, colex index), a valid filtration
order within one dimension.

Dimension 0 uses union-find over sorted edges.  Higher dimensions reduce the
coboundary matrix column by column in reverse filtration order, skipping
simplices already known to be negative (clearing) and recomputing
coboundaries on demand instead of storing columns that needed no reduction.
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict, List

INT64_MAX = np.iinfo(np.int64).max


@njit(cache=True)
def binomial_table(n, k):
    table = np.zeros((n + 1, k + 1), dtype=np.int64)
    for i in range(n + 1):
        table[i, 0] = 1
        for j in range(1, min(i, k) + 1):
            table[i, j] = table[i - 1, j - 1] + (table[i - 1, j] if j <= i - 1 else 0)
    return table


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _decode(idx, nverts, n, binom, out):
    # largest v with C(v, i+1) <= idx, vertices written in ascending order
    v = n - 1
    for i in range(nverts - 1, -1, -1):
        while binom[v, i + 1] > idx:
            v -= 1
        out[i] = v
        idx -= binom[v, i + 1]


@njit(cache=True)
def _coboundary(verts, nverts, rank, ranks, thr_rank, n, binom, base, out):
    """Write the keys of all cofacets within threshold into ``out``; return count."""
    count = 0
    for w in range(n):
        skip = False
        r = rank
        for i in range(nverts):
            if verts[i] == w:
                skip = True
                break
            rw = ranks[w, verts[i]]
            if rw > r:
                r = rw
        if skip or r > thr_rank:
            continue
        idx = 0
        pos = 0
        inserted = False
        for i in range(nverts):
            if not inserted and w < verts[i]:
                idx += binom[w, pos + 1]
                pos += 1
                inserted = True
            idx += binom[verts[i], pos + 1]
            pos += 1
        if not inserted:
            idx += binom[w, pos + 1]
        out[count] = r * base + idx
        count += 1
    return count


@njit(cache=True)
def _xor_sorted(a, b):
    out = np.empty(a.shape[0] + b.shape[0], dtype=np.int64)
    i = 0
    j = 0
    k = 0
    while i < a.shape[0] and j < b.shape[0]:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
            k += 1
        elif b[j] < a[i]:
            out[k] = b[j]
            j += 1
            k += 1
        else:
            i += 1
            j += 1
    while i < a.shape[0]:
        out[k] = a[i]
        i += 1
        k += 1
    while j < b.shape[0]:
        out[k] = b[j]
        j += 1
        k += 1
    return out[:k]


@njit(cache=True, nogil=True)
def h0_pairs(ranks, thr_rank):
    """Union-find over edges in filtration order.

    Returns (death_ranks, essential_count, merge_keys) where ``merge_keys``
    are the keys of every merging edge, zero-length ones included.
    """
    n = ranks.shape[0]
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            if ranks[i, j] <= thr_rank:
                m += 1
    base = n * (n - 1) // 2
    keys = np.empty(m, dtype=np.int64)
    ends = np.empty((m, 2), dtype=np.int64)
    c = 0
    for j in range(n):
        for i in range(j):
            if ranks[i, j] <= thr_rank:
                # colex index of {i < j} is C(j,2) + i
                keys[c] = ranks[i, j] * base + j * (j - 1) // 2 + i
                ends[c, 0] = i
                ends[c, 1] = j
                c += 1
    order = np.argsort(keys, kind="mergesort")
    parent = np.arange(n)
    deaths = np.empty(n, dtype=np.int64)
    merges = np.empty(n, dtype=np.int64)
    nd = 0
    for t in range(m):
        e = order[t]
        a = _find(parent, ends[e, 0])
        b = _find(parent, ends[e, 1])
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
            deaths[nd] = keys[e] // base
            merges[nd] = keys[e]
            nd += 1
    return deaths[:nd], n - nd, np.sort(merges[:nd])


@njit(cache=True)
def _enumerate_edges(ranks, thr_rank, base):
    n = ranks.shape[0]
    out = np.empty(n * (n - 1) // 2, dtype=np.int64)
    c = 0
    for j in range(n):
        for i in range(j):
            if ranks[i, j] <= thr_rank:
                out[c] = ranks[i, j] * base + j * (j - 1) // 2 + i
                c += 1
    return out[:c]


@njit(cache=True)
def count_triangles(ranks, thr_rank):
    n = ranks.shape[0]
    c = 0
    for k in range(n):
        for j in range(k):
            if ranks[j, k] > thr_rank:
                continue
            for i in range(j):
                if ranks[i, j] <= thr_rank and ranks[i, k] <= thr_rank:
                    c += 1
    return c


@njit(cache=True)
def _enumerate_triangles(ranks, thr_rank, base, binom, total):
    n = ranks.shape[0]
    out = np.empty(total, dtype=np.int64)
    c = 0
    for k in range(n):
        for j in range(k):
            rjk = ranks[j, k]
            if rjk > thr_rank:
                continue
            for i in range(j):
                r = rjk
                if ranks[i, j] > r:
                    r = ranks[i, j]
                if ranks[i, k] > r:
                    r = ranks[i, k]
                if r <= thr_rank:
                    out[c] = r * base + binom[k, 3] + binom[j, 2] + i
                    c += 1
    return out[:c]


@njit(cache=True, nogil=True)
def reduce_dimension(ranks, thr_rank, dim, cleared, n_triangles):
    """Cohomology reduction for ``dim`` >= 1.

    ``cleared`` holds sorted keys of ``dim``-simplices already paired as
    negatives one dimension down.  Returns (birth_ranks, death_ranks,
    essential_birth_ranks, pivot_keys); pivot keys are sorted and feed the
    clearing of the next dimension.
    """
    n = ranks.shape[0]
    binom = binomial_table(n, dim + 2)
    base = binom[n, dim + 1]
    cobase = binom[n, dim + 2]

    if dim == 1:
        simplices = _enumerate_edges(ranks, thr_rank, base)
    else:
        simplices = _enumerate_triangles(ranks, thr_rank, base, binom, n_triangles)

    keep = np.ones(simplices.shape[0], dtype=np.bool_)
    if cleared.shape[0] > 0:
        pos = np.searchsorted(cleared, simplices)
        for t in range(simplices.shape[0]):
            if pos[t] < cleared.shape[0] and cleared[pos[t]] == simplices[t]:
                keep[t] = False
    columns = np.sort(simplices[keep])[::-1]

    pivots = Dict.empty(key_type=types.int64, value_type=types.int64)
    stored = List.empty_list(types.int64[:])
    births = List.empty_list(types.int64)
    deaths = List.empty_list(types.int64)
    essential = List.empty_list(types.int64)

    verts = np.empty(dim + 1, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    nverts = dim + 1

    for t in range(columns.shape[0]):
        key = columns[t]
        rank = key // base
        _decode(key - rank * base, nverts, n, binom, verts)
        cnt = _coboundary(verts, nverts, rank, ranks, thr_rank, n, binom, cobase, buf)
        if cnt == 0:
            essential.append(rank)
            continue
        low = buf[0]
        for i in range(1, cnt):
            if buf[i] < low:
                low = buf[i]
        if low not in pivots:
            # no reduction needed: column is recomputed on demand
            pivots[low] = -key - 1
            if low // cobase > rank:
                births.append(rank)
                deaths.append(low // cobase)
            continue

        work = np.sort(buf[:cnt].copy())
        while work.shape[0] > 0:
            low = work[0]
            if low not in pivots:
                break
            slot = pivots[low]
            if slot >= 0:
                other = stored[slot]
            else:
                okey = -slot - 1
                orank = okey // base
                overts = np.empty(nverts, dtype=np.int64)
                _decode(okey - orank * base, nverts, n, binom, overts)
                obuf = np.empty(n, dtype=np.int64)
                ocnt = _coboundary(overts, nverts, orank, ranks, thr_rank, n, binom, cobase, obuf)
                other = np.sort(obuf[:ocnt])
            work = _xor_sorted(work, other)
        if work.shape[0] == 0:
            essential.append(rank)
        else:
            low = work[0]
            pivots[low] = len(stored)
            stored.append(work)
            if low // cobase > rank:
                births.append(rank)
                deaths.append(low // cobase)

    b = np.empty(len(births), dtype=np.int64)
    d = np.empty(len(deaths), dtype=np.int64)
    for i in range(len(births)):
        b[i] = births[i]
        d[i] = deaths[i]
    e = np.empty(len(essential), dtype=np.int64)
    for i in range(len(essential)):
        e[i] = essential[i]
    pk = np.empty(len(pivots), dtype=np.int64)
    i = 0
    for k in pivots.keys():
        pk[i] = k
        i += 1
    return b, d, e, np.sort(pk)
