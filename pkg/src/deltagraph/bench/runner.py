"""Workload drivers: graph construction and mixed update + analytics runs."""

from __future__ import annotations

import math
import resource
import threading
import time

import numpy as np

from .. import analytics
from ..engine import Engine
from ..errors import TransactionConflict
from ..layout import encode_weight
from .logio import OP_DELETE, UpdateLog
from .report import BenchReport, latency_summary

BACKOFF_AFTER = 10


def _prop(w: float) -> bytes:
    return b"" if math.isnan(w) else encode_weight(w)


def apply_record(engine: Engine, op: int, u: int, v: int, prop: bytes) -> int:
    """Run one log record as a transaction, retrying until it commits.

    Returns the number of aborted attempts.
    """
    attempts = 0
    while True:
        txn = engine.begin_rw()
        try:
            if op == OP_DELETE:
                txn.delete_edge(u, v)
                if u != v:
                    txn.delete_edge(v, u)
            else:
                for x in (u, v) if u != v else (u,):
                    if txn.read_vertex(x) is None:
                        txn.write_vertex(x, b"")
                txn.insert_edge(u, v, prop)
                if u != v:
                    txn.insert_edge(v, u, prop)
            txn.commit()
            return attempts
        except TransactionConflict:
            attempts += 1
            if attempts > BACKOFF_AFTER:
                time.sleep(min(0.05, 1e-5 * 2 ** (attempts - BACKOFF_AFTER)))
        except BaseException:
            txn.abort()
            raise


def partition(log: UpdateLog, threads: int) -> list[np.ndarray]:
    """Split record indices by undirected edge so each edge stays on one worker.

    Per-edge order is then log order, which makes the final state equal to a
    sequential replay, while hub edges still spread over every worker.
    """
    if threads <= 1:
        return [np.arange(len(log))]
    h = log.edge_keys().astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    owner = (h >> np.uint64(29)) % np.uint64(threads)
    return [np.flatnonzero(owner == t) for t in range(threads)]


def _run_workers(engine: Engine, log: UpdateLog, threads: int) -> tuple[int, float]:
    """Apply ``log`` with ``threads`` workers; returns ``(committed, seconds)``."""
    parts = partition(log, threads)
    op, src, dst, weight = log.op, log.src, log.dst, log.weight
    errors: list[BaseException] = []
    done = [0] * threads
    start = threading.Barrier(threads + 1)

    def work(t: int) -> None:
        idx = parts[t]
        start.wait()
        try:
            for i in idx.tolist():
                apply_record(engine, int(op[i]), int(src[i]), int(dst[i]), _prop(float(weight[i])))
                done[t] += 1
        except BaseException as exc:
            errors.append(exc)

    workers = [threading.Thread(target=work, args=(t,), name=f"bench-worker-{t}") for t in range(threads)]
    for w in workers:
        w.start()
    start.wait()
    t0 = time.perf_counter()
    for w in workers:
        w.join()
    elapsed = time.perf_counter() - t0
    if errors:
        raise errors[0]
    return sum(done), elapsed


def replay(log: UpdateLog) -> dict[int, dict[int, bytes]]:
    """Sequential map-of-maps replay of the log (the verification oracle)."""
    return replay_all((log,))


def replay_all(logs) -> dict[int, dict[int, bytes]]:
    adj: dict[int, dict[int, bytes]] = {}
    for log in logs:
        _replay_into(adj, log)
    return adj


def _replay_into(adj, log: UpdateLog) -> None:
    for op, u, v, w in zip(log.op.tolist(), log.src.tolist(), log.dst.tolist(), log.weight.tolist()):
        if op == OP_DELETE:
            adj.get(u, {}).pop(v, None)
            adj.get(v, {}).pop(u, None)
        else:
            p = _prop(w)
            adj.setdefault(u, {})[v] = p
            adj.setdefault(v, {})[u] = p


def verify(engine: Engine, expected: dict[int, dict[int, bytes]]) -> tuple[int, int]:
    """Compare a fresh snapshot with ``expected``; returns ``(edges, mismatching vertices)``."""
    bad = 0
    edges = 0
    with engine.begin_ro() as ro:
        for u in range(1, engine.index.next_vertex):
            got = dict(ro.scan_adjacency(u))
            edges += len(got)
            if got != expected.get(u, {}):
                bad += 1
    return edges, bad


def _edge_total(engine: Engine) -> int:
    with engine.begin_ro() as ro:
        return sum(len(ro.scan_adjacency(u)) for u in range(1, engine.index.next_vertex))


def _peak_rss() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _prepare(engine: Engine, log: UpdateLog) -> None:
    if log.vertex_count:
        engine.ensure_vertex_id(log.vertex_count)


def run_construction(engine: Engine, log: UpdateLog, threads: int, workload_id: str = "construct", check: bool = True) -> BenchReport:
    _prepare(engine, log)
    base_aborts = engine.aborts
    committed, elapsed = _run_workers(engine, log, threads)
    report = BenchReport(
        workload_id=workload_id,
        thread_count=threads,
        committed_txns=committed,
        wall_time_sec=elapsed,
        throughput_txn_per_sec=committed / elapsed if elapsed > 0 else 0.0,
        abort_count=engine.aborts - base_aborts,
        consolidation_count=engine.consolidator.count,
        peak_memory_bytes=_peak_rss(),
        vertex_count=log.vertex_count,
        vertex_map_digest=log.mapping_digest(),
    )
    if check:
        report.final_edge_count, report.verify_failures = verify(engine, replay(log))
    else:
        report.final_edge_count = _edge_total(engine)
    return report


def run_kernel(engine: Engine, kernel: str, source: int = 1, iterations: int = 10):
    with engine.begin_ro() as ro:
        if kernel == "pr":
            return ro.rts, analytics.pagerank(ro, iterations=iterations)
        snap = analytics.build_snapshot(ro, weighted=True)
        src = source if 0 < source < snap.n and snap.active[source] else int(np.argmax(snap.active))
        if not snap.active[src]:
            return ro.rts, np.full(snap.n, np.inf)
        return ro.rts, analytics.sssp(ro, src, weighted=True, snapshot=snap)


def run_mixed(
    engine: Engine,
    log: UpdateLog,
    threads: int,
    kernel: str = "pr",
    hotspot: bool = False,
    preload_fraction: float = 0.8,
    workload_id: str = "mixed",
    check: bool = True,
    on_result=None,
) -> BenchReport:
    """Preload a prefix, then stream the rest while one driver runs ``kernel``.

    ``on_result(rts, vector)`` is called for every completed analytics run.
    """
    if kernel not in ("pr", "sssp"):
        raise ValueError("kernel must be 'pr' or 'sssp'")
    if not 0 <= preload_fraction <= 1:
        raise ValueError("preload fraction must be in [0, 1]")
    _prepare(engine, log)
    cut = int(len(log) * preload_fraction)
    preload, stream = log.slice(0, cut), log.slice(cut, len(log))
    if hotspot:
        stream = stream.take(np.argsort(stream.src, kind="stable"))
    _run_workers(engine, preload, threads)
    base_aborts = engine.aborts
    stop = threading.Event()
    latencies: list[float] = []
    failures: list[BaseException] = []

    def driver() -> None:
        try:
            while True:
                t0 = time.perf_counter()
                rts, vec = run_kernel(engine, kernel)
                latencies.append((time.perf_counter() - t0) * 1e6)
                if on_result is not None:
                    on_result(rts, vec)
                if stop.is_set():
                    return
        except BaseException as exc:
            failures.append(exc)

    th = threading.Thread(target=driver, name="analytics-driver")
    th.start()
    try:
        committed, elapsed = _run_workers(engine, stream, threads)
    finally:
        stop.set()
        th.join()
    if failures:
        raise failures[0]
    report = BenchReport(
        workload_id=workload_id,
        thread_count=threads,
        committed_txns=committed,
        wall_time_sec=elapsed,
        throughput_txn_per_sec=committed / elapsed if elapsed > 0 else 0.0,
        analytics_latency_us={kernel: latency_summary(latencies)},
        abort_count=engine.aborts - base_aborts,
        consolidation_count=engine.consolidator.count,
        peak_memory_bytes=_peak_rss(),
        vertex_count=log.vertex_count,
        vertex_map_digest=log.mapping_digest(),
    )
    if check:
        report.final_edge_count, report.verify_failures = verify(engine, replay_all((preload, stream)))
    else:
        report.final_edge_count = _edge_total(engine)
    return report
