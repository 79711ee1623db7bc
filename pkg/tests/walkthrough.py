"""Three-transaction walkthrough on vertex 1 with two delta chains.

Vertex 1 starts with edges to 12, 3 and 5 (offsets 64, 128, 192). T1 inserts
(1,8) with a 32-byte property and commits at 14, T2 deletes (1,5) and commits
at 20, T3 updates (1,12) with a new 32-byte property.
"""

from deltagraph.layout import MASK32, delta_chain_for


def record(block, off):
    base = (block.capacity - off) >> 3
    w = block.words
    return {
        "creation": w[base],
        "invalidation": w[base + 1],
        "dst": w[base + 2],
        "previous_offset": w[base + 3] & MASK32,
        "previous_version": w[base + 3] >> 32,
        "type": w[base + 4] >> 32,
        "size": w[base + 4] & MASK32,
        "data_offset": w[base + 5] if (w[base + 4] & MASK32) > 16 else None,
    }


def run(engine):
    """Drive the scripted sequence; returns observations keyed by step."""
    obs = {}
    for v in (1, 3, 5, 8, 12):
        engine.ensure_vertex_id(v)
    with engine.begin_rw() as setup:
        for dst in (12, 3, 5):
            setup.insert_edge(1, dst)
    block = engine.index.entry(1).block
    obs["chains"] = block.chain_count
    obs["heads_before"] = [block.chain_heads(c, engine.k)[0] for c in range(block.chain_count)]
    obs["chain_of_8"] = delta_chain_for(8, block.chain_count)

    engine.set_epochs(13)
    t1 = engine.begin_rw()
    obs["t1_rts"] = t1.rts
    t1.insert_edge(1, 8, b"p" * 32)
    obs["t1_record_pending"] = record(block, 256)
    obs["t1_wts"] = t1.commit()
    obs["t1_record"] = record(block, 256)
    obs["heads_after_t1"] = [block.chain_heads(c, engine.k)[0] for c in range(block.chain_count)]

    engine.set_epochs(19)
    t2 = engine.begin_rw()
    obs["t2_deleted"] = t2.delete_edge(1, 5)
    obs["t2_wts"] = t2.commit()
    obs["t2_record"] = record(block, 320)
    obs["prior_of_t2"] = record(block, 192)

    t3 = engine.begin_rw()
    obs["t3_outcome"] = t3.insert_edge(1, 12, b"q" * 32)
    obs["t3_wts"] = t3.commit()
    obs["t3_record"] = record(block, 384)
    obs["prior_of_t3"] = record(block, 64)
    obs["heads_final"] = [block.chain_heads(c, engine.k)[0] for c in range(block.chain_count)]
    with engine.begin_ro() as ro:
        obs["final_scan"] = sorted(ro.scan_adjacency(1))
    obs["block_unchanged"] = engine.index.entry(1).block is block
    return obs


def check(obs):
    """Exact-match assertions; raises AssertionError on the first difference."""
    assert obs["chains"] == 2
    assert obs["heads_before"] == [64, 192]
    assert obs["chain_of_8"] == 0
    assert obs["t1_rts"] == 13
    r = obs["t1_record_pending"]
    assert (r["previous_offset"], r["previous_version"], r["dst"]) == (64, 0, 8)
    assert r["size"] == 32 and r["data_offset"] == 0
    assert obs["t1_wts"] == 14
    assert obs["t1_record"]["creation"] == 14
    assert obs["heads_after_t1"] == [256, 192]
    assert obs["t2_deleted"] is True
    assert obs["t2_wts"] == 20
    r = obs["t2_record"]
    assert (r["creation"], r["previous_version"], r["previous_offset"], r["type"]) == (20, 192, 192, 3)
    assert obs["prior_of_t2"]["invalidation"] == 20
    assert obs["t3_outcome"] == "updated"
    r = obs["t3_record"]
    assert (r["previous_version"], r["previous_offset"], r["type"]) == (64, 256, 2)
    assert r["creation"] == obs["t3_wts"] == 21
    assert obs["prior_of_t3"]["invalidation"] == 21
    assert obs["heads_final"] == [384, 320]
    assert obs["final_scan"] == [(3, b""), (8, b"p" * 32), (12, b"q" * 32)]
    assert obs["block_unchanged"]
