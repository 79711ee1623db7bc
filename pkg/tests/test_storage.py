import threading

import pytest

from deltagraph.errors import StorageExhausted, UseAfterFree, VertexNotFound
from deltagraph.layout import INSERT, TXN_ID_BASE, make_txn_id
from deltagraph.storage import (
    ACQUIRED,
    BUSY,
    HELD,
    EdgeDeltaBlock,
    VertexDelta,
    VertexIndex,
    allocate_delta,
    chain_lock,
    chain_unlock,
    write_delta,
)


def test_block_validates_geometry():
    with pytest.raises(ValueError):
        EdgeDeltaBlock(1, 1000, 4)
    with pytest.raises(ValueError):
        EdgeDeltaBlock(1, 1024, 3)
    with pytest.raises(StorageExhausted):
        EdgeDeltaBlock(1, 1 << 33, 4)


def test_allocation_grows_both_regions(k):
    b = EdgeDeltaBlock(1, 1024, 4)
    assert allocate_delta(b, 8, k) == (64, 0)  # inline property
    assert allocate_delta(b, 32, k) == (128, 0)  # external, data at byte 0
    assert allocate_delta(b, 32, k) == (192, 32)
    assert b.usage(k) == (192, 64)
    assert b.top(k) == 192


def test_overflow_seals_last_valid_extent(k):
    b = EdgeDeltaBlock(1, 256, 4)
    for expect in (64, 128, 192, 256):
        assert allocate_delta(b, 0, k)[0] == expect
    assert allocate_delta(b, 0, k) is None
    assert allocate_delta(b, 0, k) is None
    # the combined offset overshoots, the sealed word bounds readers
    assert b.usage(k)[0] > 256
    assert b.top(k) == 256


def test_overflow_from_external_data(k):
    b = EdgeDeltaBlock(1, 256, 4)
    assert allocate_delta(b, 100, k) == (64, 0)
    assert allocate_delta(b, 100, k) is None
    assert b.top(k) == 64


def test_concurrent_allocations_are_disjoint(k):
    b = EdgeDeltaBlock(1, 1 << 16, 4)
    got = []
    mu = threading.Lock()

    def work():
        mine = [allocate_delta(b, 0, k)[0] for _ in range(100)]
        with mu:
            got.extend(mine)

    ts = [threading.Thread(target=work) for _ in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert sorted(got) == list(range(64, 64 * 801, 64))


def test_write_and_read_property(k):
    b = EdgeDeltaBlock(1, 1024, 4)
    off, data = allocate_delta(b, 32, k)
    write_delta(b, off, data, INSERT, 7, 5, prop=b"x" * 32, k=k)
    assert k.read_property(b.words, b.raw, b.capacity, off) == b"x" * 32
    off2, data2 = allocate_delta(b, 3, k)
    write_delta(b, off2, data2, INSERT, 9, 5, previous_offset=off, prop=b"abc", k=k)
    assert k.read_property(b.words, b.raw, b.capacity, off2) == b"abc"
    assert k.chain_latest(b.words, b.capacity, off2, 7) == off


def test_chain_lock_is_no_wait(k):
    b = EdgeDeltaBlock(1, 1024, 4)
    t1, t2 = make_txn_id(1), make_txn_id(2)
    assert chain_lock(b, 1, t1, k) == ACQUIRED
    assert chain_lock(b, 1, t1, k) == HELD
    assert chain_lock(b, 1, t2, k) == BUSY
    assert chain_lock(b, 2, t2, k) == ACQUIRED
    chain_unlock(b, 1, t1, new_head=128, k=k)
    assert b.chain_heads(1, k) == (128, 0)
    assert chain_lock(b, 1, t2, k) == ACQUIRED
    chain_unlock(b, 1, t2, k=k)
    assert b.chain_heads(1, k) == (128, 0)


def test_unlock_by_non_owner_fails(k):
    b = EdgeDeltaBlock(1, 1024, 4)
    chain_lock(b, 0, make_txn_id(1), k)
    with pytest.raises(AssertionError):
        chain_unlock(b, 0, make_txn_id(2), k=k)
    with pytest.raises(IndexError):
        chain_lock(b, 4, make_txn_id(1), k)


def test_poisoned_block_refuses_readers(k):
    b = EdgeDeltaBlock(1, 256, 4)
    off, _ = allocate_delta(b, 0, k)
    write_delta(b, off, 0, INSERT, 3, 1, k=k)
    b.poison()
    with pytest.raises(UseAfterFree):
        b.top(k)
    with pytest.raises(UseAfterFree):
        k.chain_latest(b.words, b.capacity, off, 3)


def test_vertex_index_allocation_and_growth():
    idx = VertexIndex(2)
    ids = [idx.allocate() for _ in range(10)]
    assert ids == list(range(1, 11))
    assert len(idx) == 10
    e = idx.ensure(40)
    assert idx.entry(40) is e and len(idx) == 40
    with pytest.raises(VertexNotFound):
        idx.entry(41)
    with pytest.raises(VertexNotFound):
        idx.entry(0)


def test_vertex_head_cas():
    idx = VertexIndex()
    e = idx.ensure(1)
    d1 = VertexDelta(TXN_ID_BASE | 1, None, b"a")
    assert idx.cas_head(e, None, d1)
    assert not idx.cas_head(e, None, VertexDelta(2, None, b"b"))
    assert e.head is d1
