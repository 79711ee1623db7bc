import math
import threading

import pytest

from deltagraph.commit import CommitManager, EpochPair, TransactionTable
from deltagraph.errors import StaleTransactionId
from deltagraph.layout import ABORTED, ST_COMMITTED, ST_COMMITTING, ST_IN_PROGRESS, TXN_ID_BASE


def test_epochs_move_forward_only(k):
    e = EpochPair(0, k)
    assert (e.read(), e.write()) == (0, 1)
    e.set(13)
    assert (e.read(), e.write()) == (13, 14)
    with pytest.raises(ValueError):
        e.set(12)


def test_status_transitions(k):
    t = TransactionTable(4, k)
    a = t.begin()
    assert a >= TXN_ID_BASE
    assert t.status(a) == (ST_IN_PROGRESS, 0)
    assert t.resolve(a) == a
    t.set_committing(a, 14)
    assert t.status(a) == (ST_COMMITTING, 14)
    assert t.resolve(a) == 14  # committing already resolves to its epoch
    t.set_committed(a, 14)
    assert t.status(a) == (ST_COMMITTED, 14)
    with pytest.raises(AssertionError):
        t.set_aborted(a)
    b = t.begin()
    t.set_aborted(b)
    assert t.resolve(b) == ABORTED
    assert t.resolve(9) == 9


def test_epoch_exhaustion_is_reported(k):
    t = TransactionTable(4, k)
    a = t.begin()
    with pytest.raises(OverflowError):
        t.set_committing(a, 1 << 40)


def test_slot_reuse_requires_terminal_guard_free_and_floor(k):
    floor = [math.inf]
    t = TransactionTable(2, k, floor=lambda: floor[0])
    ids = [t.begin() for _ in range(4)]
    slot = t.slot_of(ids[0])
    assert not t.reusable(slot)  # in progress
    t.set_committed(ids[0], 3)
    assert not t.reusable(slot)  # guard still held (stamping pending)
    t.finish(ids[0], 5)
    assert t.reusable(slot)
    floor[0] = 5  # a retired block from epoch 5 may still carry the id
    assert not t.reusable(slot)
    floor[0] = 6
    assert t.reusable(slot)
    # the next sequence that maps to a free slot gets it; the others are skipped
    for i in ids[1:]:
        t.set_aborted(i)
        t.finish(i, 1)
    fresh = t.begin()
    assert t.slot_of(fresh) == t.slot_of(ids[0])
    # the old id is now stale and must not be silently misread
    with pytest.raises((StaleTransactionId, KeyError)):
        t.resolve(ids[0])


def test_begin_calls_pressure_hook_when_full(k):
    t = TransactionTable(1, k)
    hits = []
    a, b = t.begin(), t.begin()

    def relieve():
        hits.append(1)
        t.set_aborted(a)
        t.finish(a, 0)

    t.on_pressure = relieve
    c = t.begin()
    assert hits and t.slot_of(c) == t.slot_of(a)
    assert t.skipped > 0
    del b


@pytest.mark.parametrize("mode", ["inline", "thread"])
def test_group_commit_assigns_one_epoch_per_group(k, mode):
    t = TransactionTable(8, k)
    e = EpochPair(0, k)
    m = CommitManager(t, e, mode=mode)
    m.start()
    try:
        ids = [t.begin() for _ in range(16)]
        out = {}
        barrier = threading.Barrier(16)

        def commit(i):
            barrier.wait()
            out[i] = m.request_commit(i)

        ts = [threading.Thread(target=commit, args=(i,)) for i in ids]
        for th in ts:
            th.start()
        for th in ts:
            th.join()
        wts = sorted(set(out.values()))
        assert wts == list(range(1, m.groups + 1))
        assert m.committed == 16
        # every member is Committing at its epoch, and the read epoch covers it
        for i, w in out.items():
            assert t.status(i) == (ST_COMMITTING, w)
            assert w <= e.read()
        assert e.write() == e.read() + 1
    finally:
        m.stop()


def test_manager_rejects_unknown_mode(k):
    with pytest.raises(ValueError):
        CommitManager(TransactionTable(2, k), EpochPair(0, k), mode="batch")
