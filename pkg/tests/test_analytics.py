import math
import random

import numpy as np
import pytest

from oracles import reference_pagerank, reference_sssp
from deltagraph import NegativeWeight, VertexNotFound, build_snapshot, encode_weight, pagerank, sssp


def load_graph(eng, n, m, seed, inactive=()):
    """Random weighted digraph on ids 1..n; returns ``{u: {v: w}}`` of what was loaded."""
    rng = random.Random(seed)
    adj = {}
    with eng.begin_rw() as t:
        for v in range(1, n + 1):
            eng.ensure_vertex_id(v)
            if v not in inactive:
                t.write_vertex(v, b"")
    for _ in range(m):
        u, v = rng.randint(1, n), rng.randint(1, n)
        w = rng.choice([0.0, rng.random() * 10])
        with eng.begin_rw() as t:
            t.insert_edge(u, v, encode_weight(w))
        adj.setdefault(u, {})[v] = w
    return adj


def visible_adj(adj, inactive):
    return {u: {v: w for v, w in row.items() if v not in inactive} for u, row in adj.items() if u not in inactive}


def test_snapshot_csr_is_sorted_and_filtered(make_engine):
    eng = make_engine()
    adj = load_graph(eng, 30, 120, 1, inactive={7})
    with eng.begin_ro() as ro:
        snap = build_snapshot(ro, weighted=True)
    exp = visible_adj(adj, {7})
    assert not snap.active[7] and snap.active[1]
    assert snap.edge_count == sum(len(r) for r in exp.values())
    for u in range(1, 31):
        row = snap.indices[snap.indptr[u]:snap.indptr[u + 1]]
        assert list(row) == sorted(exp.get(u, {}))
        w = snap.weights[snap.indptr[u]:snap.indptr[u + 1]]
        assert list(w) == [exp[u][v] for v in row]


@pytest.mark.parametrize("seed", range(3))
def test_pagerank_matches_reference(make_engine, seed):
    eng = make_engine()
    inactive = {3, 11}
    adj = load_graph(eng, 60, 300, seed, inactive)
    ref = reference_pagerank(61, set(range(1, 61)) - inactive, {u: list(r) for u, r in adj.items()}, 10, 0.85)
    with eng.begin_ro() as ro:
        got = pagerank(ro)
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-9)
    assert math.isclose(got.sum(), 1.0, abs_tol=1e-12)


def test_pagerank_is_bitwise_stable_across_threads(make_engine):
    eng = make_engine()
    load_graph(eng, 200, 1500, 9)
    with eng.begin_ro() as ro:
        one = pagerank(ro, threads=1)
        for t in (2, 3, 8):
            assert pagerank(ro, threads=t).tobytes() == one.tobytes()


def test_pagerank_argument_checks(engine):
    with engine.begin_ro() as ro:
        assert pagerank(ro).sum() == 0  # empty graph
        with pytest.raises(ValueError):
            pagerank(ro, iterations=0)
        with pytest.raises(ValueError):
            pagerank(ro, damping=1.0)


@pytest.mark.parametrize("weighted", [False, True])
def test_sssp_matches_scipy(make_engine, weighted):
    pytest.importorskip("scipy")
    eng = make_engine()
    adj = load_graph(eng, 80, 250, 4, inactive={5})
    exp = visible_adj(adj, {5})
    if not weighted:
        exp = {u: {v: 1.0 for v in r} for u, r in exp.items()}
    ref = reference_sssp(81, exp, 1)
    ref[5] = math.inf
    with eng.begin_ro() as ro:
        got = sssp(ro, 1, weighted=weighted)
    np.testing.assert_allclose(got[1:], ref[1:], rtol=0, atol=1e-9)
    with eng.begin_ro() as ro:
        with pytest.raises(VertexNotFound):
            sssp(ro, 5)


def test_sssp_rejects_negative_weights(engine):
    for v in (1, 2):
        engine.ensure_vertex_id(v)
    with engine.begin_rw() as t:
        t.write_vertex(1)
        t.write_vertex(2)
        t.insert_edge(1, 2, encode_weight(-1.0))
    with engine.begin_ro() as ro:
        with pytest.raises(NegativeWeight):
            sssp(ro, 1, weighted=True)
        assert list(sssp(ro, 1)[1:]) == [0.0, 1.0]


def test_short_properties_count_as_unit_weight(engine):
    for v in (1, 2, 3):
        engine.ensure_vertex_id(v)
    with engine.begin_rw() as t:
        for v in (1, 2, 3):
            t.write_vertex(v)
        t.insert_edge(1, 2, b"abc")
        t.insert_edge(2, 3, encode_weight(2.5) + b"tail-bytes-beyond-inline")
    with engine.begin_ro() as ro:
        assert list(sssp(ro, 1, weighted=True)[1:]) == [0.0, 1.0, 3.5]


def test_analytics_see_their_snapshot_only(make_engine):
    eng = make_engine()
    load_graph(eng, 40, 150, 2)
    ro = eng.begin_ro()
    before = pagerank(ro).tobytes()
    d_before = sssp(ro, 1).tobytes()
    load_graph(eng, 40, 150, 3)
    with eng.begin_rw() as t:
        t.delete_edge(1, 2)
    assert pagerank(ro).tobytes() == before
    assert sssp(ro, 1).tobytes() == d_before
    ro.close()
