"""PageRank and single-source shortest paths over a read-only snapshot."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NegativeWeight, VertexNotFound


@dataclass
class Snapshot:
    """CSR adjacency of one snapshot; row ``v`` holds vertex id ``v`` (row 0 unused)."""

    rts: int
    active: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray | None

    @property
    def n(self) -> int:
        return len(self.active)

    @property
    def edge_count(self) -> int:
        return len(self.indices)


def build_snapshot(ro, weighted: bool = False) -> Snapshot:
    """Materialize the snapshot seen by ``ro`` as sorted CSR arrays.

    Only vertices with a visible version are active; edges touching inactive
    vertices are dropped.
    """
    eng = ro.engine
    n = eng.index.next_vertex
    active = np.zeros(n, dtype=bool)
    for v in range(1, n):
        active[v] = ro.read_vertex(v) is not None
    srcs, dsts, ws = [], [], []
    for v in np.flatnonzero(active):
        v = int(v)
        d, w = eng._scan_dsts(v, ro.rts, weighted)
        srcs.append(np.full(len(d), v, dtype=np.int64))
        dsts.append(np.asarray(d, dtype=np.int64))
        if weighted:
            ws.append(np.asarray(w, dtype=np.float64))
    src = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, np.int64)
    w = (np.concatenate(ws) if ws else np.zeros(0)) if weighted else None
    keep = (dst < n) & active[np.minimum(dst, n - 1)]
    src, dst = src[keep], dst[keep]
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    if w is not None:
        w = w[keep][order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return Snapshot(ro.rts, active, indptr, dst, w)


def _ranges(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n))
    step = -(-n // parts)
    return [(lo, min(n, lo + step)) for lo in range(0, n, step)]


def pagerank(ro, iterations: int = 10, damping: float = 0.85, threads: int = 1, snapshot: Snapshot | None = None) -> np.ndarray:
    """Pull-based power iteration; dangling mass is spread over active vertices.

    Inactive rows score 0. Every vertex sums its in-neighbours in a fixed
    order, so results do not depend on ``threads``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0 < damping < 1:
        raise ValueError("damping must be in (0, 1)")
    k = ro.engine.k
    snap = snapshot or build_snapshot(ro)
    n = snap.n
    active = snap.active
    na = int(active.sum())
    pr = np.zeros(n)
    if na == 0:
        return pr
    pr[active] = 1.0 / na
    outdeg = np.diff(snap.indptr)
    src = np.repeat(np.arange(n, dtype=np.int64), outdeg)
    order = np.lexsort((src, snap.indices))
    in_src = np.ascontiguousarray(src[order])
    in_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(snap.indices, minlength=n), out=in_indptr[1:])
    dangling = active & (outdeg == 0)
    inv_deg = np.where(outdeg > 0, 1.0 / np.maximum(outdeg, 1), 0.0)
    spans = _ranges(n, threads)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for _ in range(iterations):
            contrib = pr * inv_deg
            base = (1.0 - damping) / na + damping * math.fsum(pr[dangling]) / na
            out = np.empty(n)
            if pool is None:
                k.pagerank_range(in_indptr, in_src, contrib, out, 0, n, base, damping)
            else:
                list(pool.map(lambda r: k.pagerank_range(in_indptr, in_src, contrib, out, r[0], r[1], base, damping), spans))
            out[~active] = 0.0
            pr = out
    finally:
        if pool is not None:
            pool.shutdown()
    return pr


def sssp(ro, source: int, weighted: bool = False, snapshot: Snapshot | None = None) -> np.ndarray:
    """Dijkstra distances from ``source``; unreachable or inactive rows are inf."""
    snap = snapshot or build_snapshot(ro, weighted=weighted)
    if not (0 < source < snap.n and snap.active[source]):
        raise VertexNotFound(source)
    if weighted and snap.weights is not None:
        w = snap.weights
        if len(w) and w.min() < 0:
            raise NegativeWeight(f"negative edge weight {w.min()}")
    else:
        w = np.ones(snap.edge_count)
    return ro.engine.k.dijkstra(snap.indptr, snap.indices, np.ascontiguousarray(w, dtype=np.float64), source, snap.n)
