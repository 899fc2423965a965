"""Stratified train/validation/test partitioning."""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from ..detsim.events import apportion, class_index
from ..validation import check_fractions


class SplitError(ValueError):
    """A requested split would be empty or cannot be formed."""


def _labels_of(manifest):
    if hasattr(manifest, "y"):
        return np.asarray(manifest.y)
    items = list(manifest)
    if items and isinstance(items[0], dict):
        return np.array([class_index(r["class"]) for r in items])
    return np.array([class_index(v) for v in items])


def stratified_counts(class_counts, split_sizes):
    """Integer table with the given row and column sums, each cell a rounding of its quota.

    Quota of (class c, split s) is n_c * n_s / N. The fractional parts are
    assigned by an integral max flow (class -> split unit edges), which
    always saturates because the margins are integers.
    """
    rows = np.asarray(class_counts, dtype=np.int64)
    cols = np.asarray(split_sizes, dtype=np.int64)
    n = int(rows.sum())
    if n != int(cols.sum()):
        raise SplitError("class counts and split sizes disagree on the total")
    num = np.outer(rows, cols)
    base = num // n
    frac = num % n != 0
    need_r = rows - base.sum(axis=1)
    need_c = cols - base.sum(axis=0)
    k, m = len(rows), len(cols)
    src, sink = k + m, k + m + 1
    u, v, cap = [], [], []
    for i in range(k):
        u.append(src), v.append(i), cap.append(int(need_r[i]))
        for j in range(m):
            if frac[i, j]:
                u.append(i), v.append(k + j), cap.append(1)
    for j in range(m):
        u.append(k + j), v.append(sink), cap.append(int(need_c[j]))
    graph = csr_matrix((np.array(cap, dtype=np.int32), (u, v)), shape=(k + m + 2,) * 2)
    flow = maximum_flow(graph, src, sink)
    if flow.flow_value != int(need_r.sum()):
        raise SplitError("no stratified rounding exists")  # unreachable for integer margins
    f = flow.flow.toarray()
    return base + (f[:k, k:k + m] > 0).astype(np.int64)


def split_dataset(manifest, fractions=(0.90, 0.05, 0.05), seed=0):
    """Deterministic class-stratified partition into index lists, one per fraction.

    ``manifest`` may be a Dataset, manifest dicts, class names or labels.
    Split sizes are the largest-remainder apportionment of the total; each
    class's share of a split is within one event of its global proportion.
    """
    f = check_fractions(fractions)
    labels = _labels_of(manifest)
    n = len(labels)
    sizes = apportion(n, f) if n else np.zeros(len(f), dtype=int)
    empty = [i for i, s in enumerate(sizes) if s == 0]
    if empty:
        raise SplitError(f"split(s) {empty} would be empty for {n} events at fractions {list(f)}")
    classes = np.unique(labels)
    table = stratified_counts([np.sum(labels == c) for c in classes], sizes)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    parts = [[] for _ in f]
    for c, row in zip(classes, table):
        idx = rng.permutation(np.flatnonzero(labels == c))
        edges = np.concatenate([[0], np.cumsum(row)])
        for s in range(len(f)):
            parts[s].append(idx[edges[s]:edges[s + 1]])
    return tuple(rng.permutation(np.concatenate(p)).tolist() for p in parts)
