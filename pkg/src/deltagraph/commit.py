"""Transaction table, global epochs and the group-commit manager."""

from __future__ import annotations

import collections
import itertools
import logging
import math
import threading
import time

from . import kernels
from .layout import (
    ST_ABORTED,
    ST_COMMITTED,
    ST_COMMITTING,
    ST_IN_PROGRESS,
    STATE_SHIFT,
    TXN_ID_BASE,
    WTS_MASK,
    make_txn_id,
    pack_status,
    txn_seq,
    unpack_status,
    word_view,
)

log = logging.getLogger(__name__)

STATE_NAMES = {
    ST_IN_PROGRESS: "in-progress",
    ST_COMMITTING: "committing",
    ST_COMMITTED: "committed",
    ST_ABORTED: "aborted",
}


class EpochPair:
    """Global read and write epochs; ``write == read + 1`` when quiescent."""

    READ = 0
    WRITE = 1

    def __init__(self, read: int = 0, k=None):
        self._k = k or kernels.default
        self._raw = bytearray(16)
        self.words = word_view(self._raw)
        self.words[self.READ] = read
        self.words[self.WRITE] = read + 1

    def read(self) -> int:
        return self._k.load(self.words, self.READ)

    def write(self) -> int:
        return self._k.load(self.words, self.WRITE)

    def set(self, read: int) -> None:
        """Jump both epochs forward (test fixtures drive exact commit timestamps)."""
        if read < self.read():
            raise ValueError("epochs never move backwards")
        self._k.store(self.words, self.WRITE, read + 1)
        self._k.store(self.words, self.READ, read)


class TransactionTable:
    """Fixed-size status table; slot = seq mod capacity, tagged with a generation.

    A slot may only be handed to a new transaction once the previous occupant
    is terminal, its stamping guard is clear, and every retired block that
    could still carry its id has been reclaimed (``finish_epoch < floor()``).
    """

    def __init__(self, bits: int = 16, k=None, floor=None):
        self._k = k or kernels.default
        self.bits = bits
        self.capacity = 1 << bits
        self.mask = self.capacity - 1
        self._raw = bytearray(self.capacity * 8)
        self.words = word_view(self._raw)
        self._occ_raw = bytearray(self.capacity * 8)
        self._occupant = word_view(self._occ_raw)
        self.guard = [0] * self.capacity
        self.finish_epoch = [0] * self.capacity
        self._seq = itertools.count(1)
        self.floor = floor or (lambda: math.inf)
        self.on_pressure = None
        self.skipped = 0

    def _gen(self, seq: int) -> int:
        return seq >> self.bits

    def slot_of(self, txn_id: int) -> int:
        return txn_seq(txn_id) & self.mask

    def reusable(self, slot: int) -> bool:
        prev = self._occupant[slot]
        if not prev:
            return True
        state = self.words[slot] >> STATE_SHIFT
        return (
            self.guard[slot] == 0
            and (state == ST_COMMITTED or state == ST_ABORTED)
            and self.finish_epoch[slot] < self.floor()
        )

    def begin(self) -> int:
        k = self._k
        for attempt in itertools.count(1):
            seq = next(self._seq)
            slot = seq & self.mask
            prev = self._occupant[slot]
            if self.reusable(slot) and k.cas(self._occupant, slot, prev, seq):
                self.guard[slot] = 1
                self.finish_epoch[slot] = 0
                k.store(self.words, slot, pack_status(ST_IN_PROGRESS, self._gen(seq)))
                return make_txn_id(seq)
            self.skipped += 1
            if attempt % self.capacity == 0:
                if self.on_pressure is not None:
                    self.on_pressure()
                time.sleep(0.001)

    def status(self, txn_id: int) -> tuple[int, int]:
        """``(state, wts)`` of a live transaction."""
        seq = txn_seq(txn_id)
        state, gen, wts = unpack_status(self._k.load(self.words, seq & self.mask))
        if gen != self._gen(seq) & ((1 << 22) - 1):
            raise KeyError(f"transaction {txn_id:#x} no longer in the table")
        return state, wts

    def resolve(self, ts: int) -> int:
        """Epoch for a committed id, ``ABORTED`` or ``ts`` itself if in progress."""
        if ts < TXN_ID_BASE:
            return ts
        return self._k.lookup_status(self.words, self.bits, ts)

    def _transition(self, txn_id: int, expect: tuple[int, ...], state: int, wts: int) -> None:
        seq = txn_seq(txn_id)
        slot = seq & self.mask
        k = self._k
        while True:
            cur = k.load(self.words, slot)
            cur_state, gen, _ = unpack_status(cur)
            if cur_state not in expect:
                raise AssertionError(
                    f"illegal status transition {STATE_NAMES[cur_state]} -> {STATE_NAMES[state]}"
                )
            if k.cas(self.words, slot, cur, pack_status(state, gen, wts)):
                return

    def set_committing(self, txn_id: int, wts: int) -> None:
        if not 0 < wts <= WTS_MASK:
            raise OverflowError("epoch exhausted")
        self._transition(txn_id, (ST_IN_PROGRESS,), ST_COMMITTING, wts)

    def set_committed(self, txn_id: int, wts: int) -> None:
        self._transition(txn_id, (ST_COMMITTING, ST_IN_PROGRESS), ST_COMMITTED, wts)

    def set_aborted(self, txn_id: int) -> None:
        self._transition(txn_id, (ST_IN_PROGRESS,), ST_ABORTED, 0)

    def finish(self, txn_id: int, epoch: int) -> None:
        """Stamping or rollback is complete; drop the guard."""
        slot = self.slot_of(txn_id)
        self.finish_epoch[slot] = epoch
        self.guard[slot] = 0


class _Request:
    __slots__ = ("txn_id", "wts", "latch", "done")

    def __init__(self, txn_id: int):
        self.txn_id = txn_id
        self.wts = 0
        self.done = False
        self.latch = threading.Lock()
        self.latch.acquire()


class CommitManager:
    """Assigns one write epoch per group of queued commit requests.

    ``mode="thread"`` runs a dedicated manager thread; ``mode="inline"`` lets
    the committing thread run the group step itself, which keeps single
    threaded tests deterministic.
    """

    SPIN = 2

    def __init__(self, table: TransactionTable, epochs: EpochPair, mode: str = "thread", idle_timeout: float = 0.05):
        if mode not in ("thread", "inline"):
            raise ValueError(f"unknown commit mode {mode!r}")
        self.table = table
        self.epochs = epochs
        self.mode = mode
        self.idle_timeout = idle_timeout
        self._queue: collections.deque[_Request] = collections.deque()
        self._wake = threading.Event()
        self._step_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.groups = 0
        self.committed = 0

    def start(self) -> None:
        if self.mode != "thread" or self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="commit-manager", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is None:
            return
        self._stop.set()
        self._wake.set()
        self._thread.join()
        self._thread = None
        while self.commit_group_step():
            pass

    def _run(self) -> None:
        idle = 0
        while not self._stop.is_set():
            if self.commit_group_step():
                idle = 0
                continue
            idle += 1
            if idle <= self.SPIN:
                time.sleep(0)
                continue
            self._wake.wait(self.idle_timeout)
            self._wake.clear()

    def request_commit(self, txn_id: int) -> int:
        """Queue a commit request and block until the group's epoch is assigned."""
        req = _Request(txn_id)
        self._queue.append(req)
        if self._thread is None:
            while not req.done:
                self.commit_group_step()
            return req.wts
        # combine: if no step is running, close the group ourselves instead of
        # paying a thread handoff; otherwise the running step or the manager
        # picks the request up
        if self._step_lock.acquire(blocking=False):
            try:
                self._step()
            finally:
                self._step_lock.release()
        if not req.done:
            self._wake.set()
            req.latch.acquire()
        return req.wts

    def commit_group_step(self) -> int:
        """Commit everything queued as one group; returns the group size."""
        with self._step_lock:
            return self._step()

    def _step(self) -> int:
        q = self._queue
        group = []
        while q:
            group.append(q.popleft())
        if not group:
            return 0
        w = self.epochs.write()
        for req in group:
            self.table.set_committing(req.txn_id, w)
            req.wts = w
        # publish the group to new snapshots before waking its members
        self.epochs.set(w)
        self.groups += 1
        self.committed += len(group)
        for req in group:
            req.done = True
            req.latch.release()
        return len(group)
