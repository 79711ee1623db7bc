"""Transactional engine: snapshot-isolated vertex and edge operations."""

from __future__ import annotations

import dataclasses
import itertools
import logging
import os

from . import kernels
from .commit import CommitManager, EpochPair, TransactionTable
from .errors import StaleTransactionId, TransactionConflict, TransactionStateError, VertexNotFound
from .layout import ABORTED, DELETE, TXN_ID_BASE, delta_chain_for, lock_owner_of
from .maintenance import ActiveRegistry, Consolidator, RetiredQueue, inline_size
from .storage import EdgeDeltaBlock, VertexDelta, VertexIndex

log = logging.getLogger(__name__)

INSERTED = "inserted"
UPDATED = "updated"

ACTIVE = "active"
COMMITTED = "committed"
ABORTED_STATUS = "aborted"

# fused edge-write result codes (shared by both kernel backends)
_EW_BUSY, _EW_STALE, _EW_OVERFLOW, _EW_ABSENT = -1, -2, -3, 0
_OUTCOME = {1: INSERTED, 2: UPDATED, 3: True}


@dataclasses.dataclass
class EngineConfig:
    block_capacity: int = 1024
    initial_chain_count: int = 4
    target_chain_len: int = 8
    reclaim_period: int = 256
    table_bits: int = 16
    commit_mode: str = "thread"
    backend: str = "auto"
    poison_on_free: bool = False
    verify_consolidation: bool = False
    vertex_capacity: int = 1024

    ENV = {
        "DELTAGRAPH_BLOCK_CAPACITY": "block_capacity",
        "DELTAGRAPH_TARGET_CHAIN_LEN": "target_chain_len",
        "DELTAGRAPH_RECLAIM_PERIOD": "reclaim_period",
    }

    @classmethod
    def from_env(cls, environ=None, **overrides) -> "EngineConfig":
        """Defaults, then environment overrides, then explicit keyword overrides."""
        environ = os.environ if environ is None else environ
        values = {}
        for var, field in cls.ENV.items():
            if environ.get(var):
                values[field] = int(environ[var])
        values.update(overrides)
        return cls(**values)


class Engine:
    def __init__(self, config: EngineConfig | None = None, **overrides):
        cfg = dataclasses.replace(config or EngineConfig(), **overrides)
        self.config = cfg
        self.k = kernels.get_backend(cfg.backend)
        self.index = VertexIndex(cfg.vertex_capacity)
        self.epochs = EpochPair(0, self.k)
        self.retired = RetiredQueue(poison=cfg.poison_on_free, stamper=self._stamp_retired)
        self.table = TransactionTable(cfg.table_bits, self.k, floor=self.retired.floor)
        self.table.on_pressure = self.reclaim
        self.registry = ActiveRegistry()
        self.manager = CommitManager(self.table, self.epochs, mode=cfg.commit_mode)
        self.consolidator = Consolidator(
            self.index, self.table, self.epochs, self.registry, self.retired,
            self.k, cfg.target_chain_len, cfg.verify_consolidation,
        )
        self._ticks = itertools.count(1)
        self.commits = 0
        self.aborts = 0
        self.manager.start()

    # lifecycle -------------------------------------------------------------------

    def close(self) -> None:
        self.manager.stop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def begin_rw(self) -> "Transaction":
        return Transaction(self)

    def begin_ro(self, rts: int | None = None) -> "ReadOnlyTransaction":
        return ReadOnlyTransaction(self, rts)

    def set_epochs(self, read: int, write: int | None = None) -> None:
        """Move the global epochs forward (fixtures that need exact timestamps)."""
        if write is not None and write != read + 1:
            raise ValueError("write epoch must equal read epoch + 1")
        self.epochs.set(read)

    def reclaim(self) -> int:
        return self.retired.reclaim(self.registry.min_rts())

    def _stamp_retired(self, block) -> int:
        t = self.table
        return self.k.stamp_block(block.words, block.capacity, block.top(self.k), t.words, t.bits)

    def _tick(self) -> None:
        if next(self._ticks) % self.config.reclaim_period == 0:
            self.reclaim()

    def ensure_vertex_id(self, v: int) -> None:
        self.index.ensure(v)

    @property
    def vertex_count(self) -> int:
        return len(self.index)

    def stats(self) -> dict:
        return {
            "commits": self.commits,
            "aborts": self.aborts,
            "consolidations": self.consolidator.count,
            "verify_mismatches": self.consolidator.verify_mismatches,
            "groups": self.manager.groups,
            "retired_pending": len(self.retired),
            "freed_blocks": self.retired.freed,
        }

    def memory_bytes(self) -> int:
        """Bytes held by live edge blocks (vertex chains excluded)."""
        total = 0
        entries = self.index._entries
        for v in range(1, self.index.next_vertex):
            b = entries[v].block
            if b is not None:
                total += b.capacity + len(b._index_raw)
        return total

    # shared read paths -------------------------------------------------------------

    def _read_vertex(self, v: int, rts: int, self_id: int) -> bytes | None:
        try:
            d = self.index.entry(v).head
        except VertexNotFound:
            return None
        table = self.table
        while d is not None:
            cr = d.creation_ts
            if cr == self_id:
                return d.prop
            cr = _vertex_ts(table, d, cr)
            if cr <= rts:
                return d.prop
            d = d.previous
        return None

    def _get_edge(self, u: int, v: int, rts: int, self_id: int) -> bytes | None:
        block = self.index.entry(u).block
        if block is None:
            return None
        committed, pending = block.chain_heads(delta_chain_for(v, block.chain_count), self.k)
        k, t = self.k, self.table
        off = k.chain_visible(block.words, block.capacity, max(committed, pending), v, rts, self_id, t.words, t.bits)
        if not off or (block.words[((block.capacity - off) >> 3) + 4] >> 32) == DELETE:
            return None
        return k.read_property(block.words, block.raw, block.capacity, off)

    def _scan(self, u: int, rts: int, self_id: int) -> list[tuple[int, bytes]]:
        block = self.index.entry(u).block
        if block is None:
            return []
        k, t = self.k, self.table
        words, raw, cap = block.words, block.raw, block.capacity
        offs = k.scan_visible(words, cap, block.top(k), rts, self_id, t.words, t.bits)
        return [(words[((cap - o) >> 3) + 2], k.read_property(words, raw, cap, o)) for o in offs]

    def _scan_dsts(self, u: int, rts: int, want_weights: bool):
        block = self.index.entry(u).block
        if block is None:
            return [], ([] if want_weights else None)
        k, t = self.k, self.table
        return k.scan_edges(block.words, block.raw, block.capacity, block.top(k), rts, 0, t.words, t.bits, want_weights)


def _vertex_ts(table, d: VertexDelta, cr: int) -> int:
    """Resolve a vertex delta's creation timestamp, stamping it when final."""
    if cr < TXN_ID_BASE or cr == ABORTED:
        return cr
    try:
        res = table.resolve(cr)
    except StaleTransactionId:
        # the slot was reused, so the owner stamped this delta first
        if d.creation_ts == cr:
            raise
        return d.creation_ts
    if res < TXN_ID_BASE:
        d.creation_ts = res
    return res


class _Snapshot:
    engine: Engine
    rts: int

    def read_vertex(self, v: int) -> bytes | None:
        self._check()
        return self.engine._read_vertex(v, self.rts, self._self_id)

    def get_edge(self, u: int, v: int) -> bytes | None:
        self._check()
        return self.engine._get_edge(u, v, self.rts, self._self_id)

    def scan_adjacency(self, u: int) -> list[tuple[int, bytes]]:
        """Visible ``(dst, property)`` pairs, newest delta first."""
        self._check()
        return self.engine._scan(u, self.rts, self._self_id)

    def vertex_exists(self, v: int) -> bool:
        return self.read_vertex(v) is not None


class ReadOnlyTransaction(_Snapshot):
    """A pinned snapshot; may be shared by several threads."""

    _self_id = 0

    def __init__(self, engine: Engine, rts: int | None = None):
        self.engine = engine
        if rts is None:
            self._key, self.rts = engine.registry.enter(engine.epochs)
        else:
            if rts > engine.epochs.read():
                raise ValueError(f"rts {rts} is in the future")
            self._key = engine.registry.enter_at(rts)
            self.rts = rts
        self.active = True

    def _check(self) -> None:
        if not self.active:
            raise TransactionStateError("read-only transaction already closed")

    def close(self) -> None:
        if self.active:
            self.active = False
            self.engine.registry.leave(self._key)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Transaction(_Snapshot):
    """A read-write transaction; owned by one thread at a time."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.txn_id = engine.table.begin()
        self._self_id = self.txn_id
        self._tag = lock_owner_of(self.txn_id)
        self._key, self.rts = engine.registry.enter(engine.epochs)
        self.status = ACTIVE
        self.edge_writes: dict[int, set[int]] = {}
        self.vertex_writes: list[VertexDelta] = []
        self.wts = 0

    def __repr__(self) -> str:
        return f"Transaction(id={self.txn_id:#x}, rts={self.rts}, {self.status})"

    def _check(self) -> None:
        if self.status != ACTIVE:
            raise TransactionStateError(f"transaction is {self.status}")

    def _conflict(self, why: str):
        self.abort()
        raise TransactionConflict(why)

    # vertices ----------------------------------------------------------------------

    def write_vertex(self, v: int, prop: bytes = b"") -> None:
        self._check()
        eng = self.engine
        entry = eng.index.entry(v)
        head = entry.head
        d = head
        while d is not None:
            cr = d.creation_ts
            if cr != self.txn_id:
                cr = _vertex_ts(eng.table, d, cr)
            if cr != ABORTED:
                break
            d = d.previous
        if d is not None and cr != self.txn_id and (cr >= TXN_ID_BASE or cr > self.rts):
            self._conflict(f"vertex {v} was written after this snapshot")
        new = VertexDelta(self.txn_id, head, bytes(prop))
        if not eng.index.cas_head(entry, head, new):
            self._conflict(f"concurrent write to vertex {v}")
        self.vertex_writes.append(new)

    def insert_vertex(self, prop: bytes = b"", v: int | None = None) -> int:
        """Create a vertex (fresh id unless ``v`` is given) and return its id."""
        self._check()
        if v is None:
            v = self.engine.index.allocate()
        else:
            self.engine.index.ensure(v)
        self.write_vertex(v, prop)
        return v

    # edges -------------------------------------------------------------------------

    def _enter_block(self, u: int, entry) -> EdgeDeltaBlock:
        eng = self.engine
        cons = eng.consolidator
        while True:
            block = entry.block
            if block is None:
                cfg = eng.config
                fresh = EdgeDeltaBlock(u, cfg.block_capacity, cfg.initial_chain_count, eng.epochs.write())
                eng.index.cas_block(entry, None, fresh)
                continue
            if cons.enter_writer(entry, block):
                return block
            cons.wait_replaced(entry, block)

    def _edge_write(self, u: int, v: int, delete: bool, prop: bytes) -> str | bool:
        self._check()
        eng = self.engine
        k, table = eng.k, eng.table
        cons = eng.consolidator
        entry = eng.index.entry(u)
        while True:
            block = self._enter_block(u, entry)
            try:
                code = k.edge_write(
                    block.words, block.raw, block.capacity, block.header, block.index,
                    block.chain_count, self.txn_id, self._tag, self.rts, v, delete, prop,
                    table.words, table.bits,
                )
            finally:
                cons.leave_writer(block)
            if code > 0:
                self.edge_writes.setdefault(u, set()).add(v)
                return _OUTCOME[code]
            if code == _EW_ABSENT:
                return False
            if code == _EW_OVERFLOW:
                cons.handle_overflow(entry, block, inline_size(len(prop)))
                continue
            if code == _EW_BUSY:
                self._conflict(f"chain of edge ({u},{v}) is locked by another transaction")
            self._conflict(f"edge ({u},{v}) was written after this snapshot")

    def insert_edge(self, u: int, v: int, prop: bytes = b"") -> str:
        """Insert ``(u, v)`` or update it if visible; returns INSERTED or UPDATED."""
        return self._edge_write(u, v, False, bytes(prop))

    def delete_edge(self, u: int, v: int) -> bool:
        """Delete ``(u, v)`` if visible; False (transaction stays active) otherwise."""
        return self._edge_write(u, v, True, b"")

    # termination -------------------------------------------------------------------

    def _release_chains(self, new_cr: int, new_inv: int, commit: bool) -> None:
        eng = self.engine
        k = eng.k
        for u, dsts in self.edge_writes.items():
            entry = eng.index.entry(u)
            block = self._enter_block(u, entry)
            try:
                k.release_chains(
                    block.words, block.capacity, block.index, block.chain_count,
                    self._tag, self.txn_id, dsts, new_cr, new_inv, commit,
                )
            finally:
                eng.consolidator.leave_writer(block)

    def _finish(self) -> None:
        eng = self.engine
        eng.table.finish(self.txn_id, eng.epochs.write())
        eng.registry.leave(self._key)
        eng._tick()

    def commit(self) -> int:
        """Commit and return the commit timestamp."""
        self._check()
        eng = self.engine
        if not self.edge_writes and not self.vertex_writes:
            eng.table.set_committed(self.txn_id, self.rts)
            self.wts = self.rts
        else:
            self.status = "committing"
            wts = eng.manager.request_commit(self.txn_id)
            for d in self.vertex_writes:
                d.creation_ts = wts
            self._release_chains(wts, wts, commit=True)
            eng.table.set_committed(self.txn_id, wts)
            self.wts = wts
        self.status = COMMITTED
        eng.commits += 1
        self._finish()
        return self.wts

    def abort(self) -> None:
        if self.status != ACTIVE:
            return
        eng = self.engine
        eng.table.set_aborted(self.txn_id)
        self.status = ABORTED_STATUS
        for d in self.vertex_writes:
            d.creation_ts = ABORTED
        self._release_chains(ABORTED, 0, commit=False)
        eng.aborts += 1
        self._finish()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if self.status == ACTIVE:
            if exc_type is None:
                self.commit()
            else:
                self.abort()
