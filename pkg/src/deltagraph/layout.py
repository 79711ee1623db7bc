"""Bit-level layout shared by the storage engine and its kernels.

Everything that threads race on lives in 64-bit words inside ``bytearray``
buffers so that the compiled kernels and the pure-Python fallback operate on
the same memory. A block is addressed by *delta offsets*: the delta whose
offset is ``k`` occupies bytes ``[capacity - k, capacity - k + 64)``; the
property-data region grows forward from byte 0.

Edge-delta record (8 words, 64 bytes)::

    word 0  creation timestamp
    word 1  invalidation timestamp (0 = never invalidated)
    word 2  destination vertex id
    word 3  previous_offset (low 32) | previous_version_offset (high 32)
    word 4  data_size (low 32) | delta type (bits 32..39)
    word 5  external data offset, or first 8 inline property bytes
    word 6  inline property bytes 8..15
    word 7  reserved
"""

from __future__ import annotations

import struct

WORD = 8
DELTA_SIZE = 64
DELTA_WORDS = DELTA_SIZE // WORD
INLINE_THRESHOLD = 16
INLINE_BYTE_OFFSET = 40

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

# Timestamp value space.
TXN_ID_BASE = 1 << 63
ABORTED = MASK64
POISON_WORD = 0xA5A5A5A5A5A5A5A5
POISON_BYTE = 0xA5

# Record word slots.
F_CREATION = 0
F_INVALIDATION = 1
F_DST = 2
F_LINKS = 3
F_META = 4
F_LOCATOR = 5

# Delta types (0 marks an allocated-but-unwritten slot).
INSERT = 1
UPDATE = 2
DELETE = 3
DELTA_TYPE_NAMES = {INSERT: "insert", UPDATE: "update", DELETE: "delete"}

# Block header words.
H_COMBINED = 0
H_WRITERS = 1
H_STATE = 2
H_SEALED = 3
HEADER_WORDS = 4
HEADER_BYTES = 64
STATE_NORMAL = 0
STATE_CONSOLIDATING = 1
SEALED_FLAG = 1 << 63

# Delta-chains index: two words per chain, [lock word, pending head].
LOCK_FLAG = 1 << 32
OWNER_SHIFT = 33
OWNER_MASK = (1 << 31) - 1

# Transaction table status word: state (2 bits) | generation (22) | wts (40).
ST_IN_PROGRESS = 0
ST_COMMITTING = 1
ST_COMMITTED = 2
ST_ABORTED = 3
STATE_SHIFT = 62
GEN_SHIFT = 40
GEN_MASK = (1 << 22) - 1
WTS_MASK = (1 << 40) - 1

_F64 = struct.Struct("<d")


def is_txn_id(ts: int) -> bool:
    return ts >= TXN_ID_BASE and ts != ABORTED


def is_epoch(ts: int) -> bool:
    return 0 < ts < TXN_ID_BASE


def make_txn_id(seq: int) -> int:
    return TXN_ID_BASE | seq


def txn_seq(txn_id: int) -> int:
    return txn_id & ~TXN_ID_BASE


def pack_combined(delta_bytes: int, data_bytes: int) -> int:
    """Pack both allocation cursors into one word (delta bytes high)."""
    if not (0 <= delta_bytes <= MASK32 and 0 <= data_bytes <= MASK32):
        raise ValueError("allocation cursor out of 32-bit range")
    return (delta_bytes << 32) | data_bytes


def unpack_combined(word: int) -> tuple[int, int]:
    return word >> 32, word & MASK32


def pack_lock(owner: int, locked: bool, head: int) -> int:
    return ((owner & OWNER_MASK) << OWNER_SHIFT) | (LOCK_FLAG if locked else 0) | head


def unpack_lock(word: int) -> tuple[int, bool, int]:
    return (word >> OWNER_SHIFT) & OWNER_MASK, bool(word & LOCK_FLAG), word & MASK32


def lock_owner_of(txn_id: int) -> int:
    """Owner tag stored in a chain lock word for ``txn_id``; never 0."""
    return (txn_seq(txn_id) & OWNER_MASK) or OWNER_MASK


def pack_status(state: int, gen: int, wts: int = 0) -> int:
    return (state << STATE_SHIFT) | ((gen & GEN_MASK) << GEN_SHIFT) | (wts & WTS_MASK)


def unpack_status(word: int) -> tuple[int, int, int]:
    return word >> STATE_SHIFT, (word >> GEN_SHIFT) & GEN_MASK, word & WTS_MASK


def record_base(capacity: int, offset: int) -> int:
    """Word index of field 0 of the delta at ``offset``."""
    return (capacity - offset) >> 3


def delta_chain_for(dst: int, chain_count: int) -> int:
    """Chain a destination hashes to: ``dst mod chain_count``."""
    if chain_count < 1:
        raise ValueError("chain_count must be >= 1")
    return dst % chain_count


def encode_weight(weight: float) -> bytes:
    return _F64.pack(weight)


def decode_weight(prop: bytes) -> float:
    return _F64.unpack_from(prop)[0]


def word_view(buf: bytearray) -> memoryview:
    return memoryview(buf).cast("Q")


assert DELTA_SIZE == DELTA_WORDS * WORD == 64
assert INLINE_BYTE_OFFSET + INLINE_THRESHOLD <= DELTA_SIZE - WORD
