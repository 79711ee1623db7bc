"""Block consolidation on overflow and lazy reclamation of retired blocks."""

from __future__ import annotations

import collections
import itertools
import logging
import math
import threading
import time

from . import kernels
from .layout import (
    DELTA_SIZE,
    H_COMBINED,
    H_STATE,
    H_WRITERS,
    HEADER_BYTES,
    INLINE_THRESHOLD,
    LOCK_FLAG,
    OWNER_SHIFT,
    OWNER_MASK,
    STATE_CONSOLIDATING,
    STATE_NORMAL,
    pack_combined,
    pack_lock,
)
from .storage import EdgeDeltaBlock

log = logging.getLogger(__name__)

LEADER = "leader"
FOLLOWER = "follower"

MIN_CHAINS = 4


def pow2ceil(x: int) -> int:
    return 1 if x <= 1 else 1 << (x - 1).bit_length()


class ActiveRegistry:
    """Read timestamps of every live transaction, read-write and read-only.

    A new entry is first published with rts 0, which pins everything, and
    only then is the read epoch sampled; a concurrent reclaimer can therefore
    never miss a snapshot that is about to start.
    """

    def __init__(self):
        self._rts: dict[int, int] = {}
        self._keys = itertools.count(1)

    def enter(self, epochs) -> tuple[int, int]:
        key = next(self._keys)
        self._rts[key] = 0
        rts = epochs.read()
        self._rts[key] = rts
        return key, rts

    def enter_at(self, rts: int) -> int:
        """Register a snapshot at an explicit (historical) rts.

        Raises ValueError unless some live snapshot already pins history at
        or below ``rts``; otherwise versions it needs may be gone.
        """
        key = next(self._keys)
        self._rts[key] = 0
        others = [v for k, v in list(self._rts.items()) if k != key]
        if rts < min(others, default=math.inf):
            del self._rts[key]
            raise ValueError(f"rts {rts} predates every pinned snapshot")
        self._rts[key] = rts
        return key

    def leave(self, key: int) -> None:
        self._rts.pop(key, None)

    def min_rts(self) -> float:
        return min(self._rts.values(), default=math.inf)

    def __len__(self) -> int:
        return len(self._rts)


class RetiredBlock:
    __slots__ = ("block", "floor_epoch", "retire_epoch", "dirty")

    def __init__(self, block: EdgeDeltaBlock, floor_epoch: int):
        self.block = block
        self.floor_epoch = floor_epoch
        self.retire_epoch: int | None = None
        # may still hold transaction ids; cleared once a sweep stamps them all
        self.dirty = True


class RetiredQueue:
    """Blocks replaced by consolidation, waiting for their readers to drain.

    ``floor()`` is the smallest ``floor_epoch`` of any retired block that may
    still hold raw transaction ids. A table slot whose occupant finished
    before it may be reused. ``stamper(block)`` resolves the ids of a retired
    block in place and returns how many are still in progress; with it,
    blocks pinned by a long-lived snapshot stop holding back slot reuse as
    soon as their writers are done.
    """

    def __init__(self, poison: bool = False, stamper=None):
        self.poison = poison
        self.stamper = stamper
        self._q: collections.deque[RetiredBlock] = collections.deque()
        self._mu = threading.Lock()
        self._drain = threading.Lock()
        self._floor = math.inf
        self.freed = 0

    def publish(self, block: EdgeDeltaBlock, floor_epoch: int) -> RetiredBlock:
        rb = RetiredBlock(block, floor_epoch)
        with self._mu:
            self._q.append(rb)
            if floor_epoch < self._floor:
                self._floor = floor_epoch
        return rb

    def floor(self) -> float:
        return self._floor

    def __len__(self) -> int:
        return len(self._q)

    def reclaim(self, min_rts: float) -> int:
        """Free every installed block retired before ``min_rts``; non-blocking.

        Survivors are swept with ``stamper`` and the floor is recomputed.
        """
        if not self._drain.acquire(blocking=False):
            return 0
        try:
            victims = []
            for rb in list(self._q):
                if rb.retire_epoch is None:
                    continue
                if rb.retire_epoch < min_rts:
                    victims.append(rb)
                elif rb.dirty and self.stamper is not None and self.stamper(rb.block) == 0:
                    rb.dirty = False
            with self._mu:
                for rb in victims:
                    self._q.remove(rb)
                self._floor = min((rb.floor_epoch for rb in self._q if rb.dirty), default=math.inf)
            for rb in victims:
                if self.poison:
                    rb.block.poison()
                rb.block = None
            self.freed += len(victims)
            return len(victims)
        finally:
            self._drain.release()


class Consolidator:
    """Rebuilds overflowed blocks and installs them without blocking readers."""

    def __init__(self, index, table, epochs, registry, retired, k=None, target_chain_len=8, verify=False):
        self.index = index
        self.table = table
        self.epochs = epochs
        self.registry = registry
        self.retired = retired
        self.k = k or kernels.default
        self.target_chain_len = target_chain_len
        self.verify = verify
        self.count = 0
        self.verify_mismatches = 0
        self._count_lock = threading.Lock()

    # writer-section protocol -------------------------------------------------

    def enter_writer(self, entry, block: EdgeDeltaBlock) -> bool:
        """Join ``block``'s writer section; False if it is being consolidated."""
        k = self.k
        k.fetch_add(block.header, H_WRITERS, 1)
        if k.load(block.header, H_STATE) == STATE_NORMAL:
            return True
        k.fetch_sub(block.header, H_WRITERS, 1)
        return False

    def leave_writer(self, block: EdgeDeltaBlock) -> None:
        self.k.fetch_sub(block.header, H_WRITERS, 1)

    @staticmethod
    def wait_replaced(entry, block: EdgeDeltaBlock) -> None:
        while entry.block is block:
            time.sleep(0)

    def try_enter(self, block: EdgeDeltaBlock) -> str:
        ok = self.k.cas(block.header, H_STATE, STATE_NORMAL, STATE_CONSOLIDATING)
        return LEADER if ok else FOLLOWER

    def handle_overflow(self, entry, block: EdgeDeltaBlock, request_bytes: int) -> None:
        """Called outside the writer section after a failed allocation."""
        if self.try_enter(block) == LEADER:
            self.consolidate(entry, block, request_bytes)
        else:
            self.wait_replaced(entry, block)

    # consolidation -------------------------------------------------------------

    def consolidate(self, entry, block: EdgeDeltaBlock, request_bytes: int = 0) -> EdgeDeltaBlock:
        k = self.k
        while k.load(block.header, H_WRITERS):
            time.sleep(0)
        # read epoch first: a snapshot registering concurrently either shows up
        # in the registry or starts at or after this epoch
        min_rts = self.epochs.read()
        min_rts = min(min_rts, self.registry.min_rts())
        table = self.table
        top = block.top(k)
        old_count = block.chain_count
        kept, flags, live, data = k.plan_consolidation(
            block.words, block.capacity, top, block.index, old_count, min_rts, table.words, table.bits
        )
        chains = max(old_count, MIN_CHAINS, pow2ceil(-(-live // self.target_chain_len)))
        need = len(kept) * DELTA_SIZE + data + HEADER_BYTES + request_bytes
        capacity = pow2ceil(2 * need)
        new = EdgeDeltaBlock(block.owner, capacity, chains, self.epochs.write())
        d, p = k.copy_retained(
            block.words, block.raw, block.capacity, kept, flags,
            new.words, new.raw, capacity, chains, new.index, table.words, table.bits,
        )
        new.header[H_COMBINED] = pack_combined(d, p)
        self._carry_locks(block, new)
        if self.verify:
            self._verify(block, top, new, min_rts)
        rb = self.retired.publish(block, self.epochs.write())
        self.index.cas_block(entry, block, new)
        rb.retire_epoch = self.epochs.write()
        with self._count_lock:
            self.count += 1
        return new

    @staticmethod
    def _carry_locks(old: EdgeDeltaBlock, new: EdgeDeltaBlock) -> None:
        """Re-lock new chains holding pending deltas for the old chain's owner.

        Chain counts only grow by powers of two, so new chain ``c`` maps back
        to old chain ``c % old_count``.
        """
        oi, ni = old.index, new.index
        oc = old.chain_count
        for c in range(new.chain_count):
            if not ni[2 * c + 1]:
                continue
            w = oi[2 * (c % oc)]
            if not w & LOCK_FLAG:
                raise AssertionError(f"pending deltas on unlocked chain of vertex {old.owner}")
            ni[2 * c] = pack_lock((w >> OWNER_SHIFT) & OWNER_MASK, True, ni[2 * c])

    def _verify(self, old: EdgeDeltaBlock, top: int, new: EdgeDeltaBlock, min_rts) -> None:
        k, t = self.k, self.table
        snaps = {self.epochs.read()}
        snaps.update(r for r in list(self.registry._rts.values()) if r >= min_rts)
        ntop = new.top(k)
        for rts in sorted(snaps):
            a = self._contents(old, top, rts)
            b = self._contents(new, ntop, rts)
            if a != b:
                self.verify_mismatches += 1
                log.error("consolidation of vertex %d changed the snapshot at rts %d", old.owner, rts)

    def _contents(self, block, top, rts):
        k, t = self.k, self.table
        offs = k.scan_visible(block.words, block.capacity, top, rts, 0, t.words, t.bits)
        return sorted(
            (block.words[((block.capacity - o) >> 3) + 2], k.read_property(block.words, block.raw, block.capacity, o))
            for o in offs
        )


def inline_size(prop_len: int) -> int:
    """Bytes a write of ``prop_len`` property bytes reserves in a block."""
    return DELTA_SIZE + (prop_len if prop_len > INLINE_THRESHOLD else 0)
