"""Multi-version delta storage: edge-deltas blocks, chain index, vertex index."""

from __future__ import annotations

import threading
import time

from . import kernels
from .errors import StorageExhausted, UseAfterFree, VertexNotFound
from .layout import (
    DELTA_SIZE,
    H_COMBINED,
    H_SEALED,
    HEADER_WORDS,
    INLINE_THRESHOLD,
    LOCK_FLAG,
    MASK32,
    POISON_BYTE,
    SEALED_FLAG,
    delta_chain_for,
    lock_owner_of,
    pack_lock,
    unpack_lock,
    word_view,
)

__all__ = [
    "EdgeDeltaBlock",
    "VertexDelta",
    "VertexEntry",
    "VertexIndex",
    "allocate_delta",
    "write_delta",
    "chain_lock",
    "chain_unlock",
    "delta_chain_for",
    "ACQUIRED",
    "HELD",
    "BUSY",
    "KEEP_OLD",
]

ACQUIRED = 1
HELD = 2
BUSY = 0
KEEP_OLD = None


def _is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


class EdgeDeltaBlock:
    """Per-vertex arena: deltas grow backward from the end, data forward from 0.

    The block owns its delta-chains index so that installing a block in the
    vertex index swaps block and index in one reference store.
    """

    __slots__ = (
        "owner",
        "capacity",
        "chain_count",
        "creation_epoch",
        "raw",
        "words",
        "_header_raw",
        "header",
        "_index_raw",
        "index",
        "freed",
    )

    def __init__(self, owner: int, capacity: int, chain_count: int, creation_epoch: int = 0):
        if not _is_pow2(capacity) or capacity < DELTA_SIZE:
            raise ValueError(f"block capacity must be a power of two >= 64, got {capacity}")
        if capacity > 1 << 32:
            raise StorageExhausted(f"block of {capacity} bytes exceeds 32-bit offsets")
        if not _is_pow2(chain_count):
            raise ValueError(f"chain count must be a power of two, got {chain_count}")
        self.owner = owner
        self.capacity = capacity
        self.chain_count = chain_count
        self.creation_epoch = creation_epoch
        self.raw = bytearray(capacity)
        self.words = word_view(self.raw)
        self._header_raw = bytearray(HEADER_WORDS * 8)
        self.header = word_view(self._header_raw)
        self._index_raw = bytearray(chain_count * 16)
        self.index = word_view(self._index_raw)
        self.freed = False

    def usage(self, k=None) -> tuple[int, int]:
        """``(delta_bytes, data_bytes)`` currently allocated (may exceed capacity)."""
        c = (k or kernels.default).load(self.header, H_COMBINED)
        return c >> 32, c & MASK32

    def top(self, k=None) -> int:
        """Offset of the newest delta a reader may look at.

        After an overflow the combined offset overshoots the capacity; the
        thread whose allocation crossed it records the last valid extent.
        """
        if self.freed:
            raise UseAfterFree(f"block of vertex {self.owner} was reclaimed")
        k = k or kernels.default
        c = k.load(self.header, H_COMBINED)
        d = c >> 32
        if d + (c & MASK32) <= self.capacity:
            return d
        while True:
            s = k.load(self.header, H_SEALED)
            if s:
                return s & MASK32
            time.sleep(0)

    def chain_heads(self, chain: int, k=None) -> tuple[int, int]:
        """``(committed_head, pending_head)`` of one chain."""
        k = k or kernels.default
        pending = k.load(self.index, 2 * chain + 1)
        return k.load(self.index, 2 * chain) & MASK32, pending

    def poison(self) -> None:
        fill = bytes([POISON_BYTE])
        self.raw[:] = fill * self.capacity
        self._index_raw[:] = fill * len(self._index_raw)
        self.freed = True

    def __repr__(self) -> str:
        d, p = self.usage()
        return (
            f"EdgeDeltaBlock(owner={self.owner}, capacity={self.capacity}, "
            f"chains={self.chain_count}, deltas={d // DELTA_SIZE}, data={p})"
        )


def allocate_delta(block: EdgeDeltaBlock, property_size: int, k=None) -> tuple[int, int] | None:
    """Reserve one delta slot (and external data space) with a single fetch-add.

    Returns ``(delta_offset, data_offset)`` or ``None`` on overflow, in which
    case the reservation is abandoned and the block must be consolidated.
    """
    k = k or kernels.default
    ext = property_size if property_size > INLINE_THRESHOLD else 0
    old = k.fetch_add(block.header, H_COMBINED, (DELTA_SIZE << 32) | ext)
    d0, p0 = old >> 32, old & MASK32
    cap = block.capacity
    if d0 + DELTA_SIZE + p0 + ext > cap:
        if d0 + p0 <= cap:
            # this allocation crossed the capacity: seal the valid extent
            k.store(block.header, H_SEALED, SEALED_FLAG | d0)
        return None
    return d0 + DELTA_SIZE, p0


def write_delta(
    block: EdgeDeltaBlock,
    delta_offset: int,
    data_offset: int,
    delta_type: int,
    dst: int,
    creation_ts: int,
    previous_offset: int = 0,
    previous_version_offset: int = 0,
    prop: bytes = b"",
    k=None,
) -> None:
    """Store property bytes, then the record; the creation word publishes it."""
    k = k or kernels.default
    k.write_delta(
        block.words,
        block.raw,
        block.capacity,
        delta_offset,
        delta_type,
        dst,
        previous_offset,
        previous_version_offset,
        prop,
        data_offset,
        creation_ts,
    )


def chain_lock(block: EdgeDeltaBlock, chain: int, txn_id: int, k=None) -> int:
    """One no-wait attempt to lock a chain: ``ACQUIRED``, ``HELD`` or ``BUSY``."""
    k = k or kernels.default
    if not 0 <= chain < block.chain_count:
        raise IndexError(chain)
    w = k.load(block.index, 2 * chain)
    me = lock_owner_of(txn_id)
    if w & LOCK_FLAG:
        return HELD if (w >> 33) == me else BUSY
    return ACQUIRED if k.cas(block.index, 2 * chain, w, pack_lock(me, True, w & MASK32)) else BUSY


def chain_unlock(block: EdgeDeltaBlock, chain: int, txn_id: int, new_head: int | None = KEEP_OLD, k=None) -> None:
    """Release a chain lock, installing ``new_head`` (commit) or keeping the old head."""
    k = k or kernels.default
    owner, locked, head = unpack_lock(k.load(block.index, 2 * chain))
    if not locked or owner != lock_owner_of(txn_id):
        raise AssertionError(f"chain {chain} of vertex {block.owner} not held by {txn_id:#x}")
    if new_head is not None:
        # publish the head while still locked so a reader that already saw
        # pending == 0 finds the committed deltas through the lock word
        k.store(block.index, 2 * chain, pack_lock(owner, True, new_head))
        head = new_head
    # clear pending before releasing: the next owner must start from zero
    k.store(block.index, 2 * chain + 1, 0)
    k.store(block.index, 2 * chain, pack_lock(0, False, head))


class VertexDelta:
    """One vertex version; ``previous`` links to the older version."""

    __slots__ = ("creation_ts", "previous", "prop")

    def __init__(self, creation_ts: int, previous: "VertexDelta | None", prop: bytes):
        self.creation_ts = creation_ts
        self.previous = previous
        self.prop = prop

    def __repr__(self) -> str:
        return f"VertexDelta(ts={self.creation_ts:#x}, prop={self.prop!r})"


class VertexEntry:
    __slots__ = ("head", "block")

    def __init__(self):
        self.head: VertexDelta | None = None
        self.block: EdgeDeltaBlock | None = None


_STRIPES = 64


class VertexIndex:
    """Dense vector of vertex entries indexed by vertex id (ids start at 1).

    Growth copies entry references into a larger list and swaps the list
    reference; entries are shared, so readers holding the old list still see
    live data and never block.
    """

    def __init__(self, initial_capacity: int = 1024):
        self._entries = [VertexEntry() for _ in range(max(2, initial_capacity))]
        self._next = 1
        self._grow = threading.Lock()
        self._stripes = [threading.Lock() for _ in range(_STRIPES)]

    @property
    def next_vertex(self) -> int:
        return self._next

    def __len__(self) -> int:
        return self._next - 1

    def entry(self, v: int) -> VertexEntry:
        if 0 < v < self._next:
            return self._entries[v]
        raise VertexNotFound(v)

    def _reserve(self, upto: int) -> None:
        entries = self._entries
        if upto < len(entries):
            return
        size = len(entries)
        while size <= upto:
            size *= 2
        self._entries = entries + [VertexEntry() for _ in range(size - len(entries))]

    def allocate(self) -> int:
        with self._grow:
            v = self._next
            self._reserve(v)
            self._next = v + 1
            return v

    def ensure(self, v: int) -> VertexEntry:
        """Make ids up to ``v`` addressable (used when ids are assigned externally)."""
        if v < 1:
            raise VertexNotFound(v)
        if v >= self._next:
            with self._grow:
                if v >= self._next:
                    self._reserve(v)
                    self._next = v + 1
        return self._entries[v]

    def cas_head(self, entry: VertexEntry, expected: VertexDelta | None, new: VertexDelta) -> bool:
        with self._stripes[(id(entry) >> 4) % _STRIPES]:
            if entry.head is expected:
                entry.head = new
                return True
            return False

    def cas_block(self, entry: VertexEntry, expected, new) -> bool:
        with self._stripes[(id(entry) >> 4) % _STRIPES]:
            if entry.block is expected:
                entry.block = new
                return True
            return False
