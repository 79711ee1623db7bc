"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--edges 20000] [--repeat 5]

Each row times the same operation on identical inputs with both backends and
reports the best of ``--repeat`` runs plus the speedup.
"""

from __future__ import annotations

import argparse
import random
import time

from deltagraph import Engine, kernels, pagerank, sssp


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build(backend, edges, seed=0):
    eng = Engine(backend=backend, commit_mode="inline", vertex_capacity=1024)
    rng = random.Random(seed)
    eng.ensure_vertex_id(1000)
    with eng.begin_rw() as t:
        for v in range(1, 1001):
            t.write_vertex(v)
    pairs = [(rng.randint(1, 1000), rng.randint(1, 1000)) for _ in range(edges)]
    for i in range(0, edges, 100):
        with eng.begin_rw() as t:
            for u, v in pairs[i:i + 100]:
                t.insert_edge(u, v, rng.random().hex().encode()[:8])
    return eng


def cases(edges):
    def insert(backend):
        return lambda: build(backend, edges).close()

    def with_graph(backend, op):
        eng = build(backend, edges)
        ro = eng.begin_ro()
        return lambda: op(eng, ro)

    def scans(eng, ro):
        for u in range(1, 1001):
            ro.scan_adjacency(u)

    def lookups(eng, ro):
        for u in range(1, 1001):
            for v in range(1, 20):
                ro.get_edge(u, v)

    return [
        ("insert (1 txn / 100 edges)", insert),
        ("scan every adjacency", lambda b: with_graph(b, scans)),
        ("point lookups x19000", lambda b: with_graph(b, lookups)),
        ("pagerank 10 iterations", lambda b: with_graph(b, lambda e, ro: pagerank(ro))),
        ("sssp unweighted", lambda b: with_graph(b, lambda e, ro: sssp(ro, 1))),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--edges", type=int, default=20_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'operation':<30}{'cython (ms)':>14}{'python (ms)':>14}{'speedup':>10}")
    for name, make in cases(args.edges):
        c = best_of(make("cython"), args.repeat) * 1e3
        py = best_of(make("python"), args.repeat) * 1e3
        print(f"{name:<30}{c:>14.2f}{py:>14.2f}{py / c:>9.1f}x")


if __name__ == "__main__":
    main()
