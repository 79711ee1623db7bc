"""Pure-Python implementations of the hot storage and analytics kernels.

Selected when the compiled ``_ckernels`` extension is unavailable or when
``DELTAGRAPH_PURE=1``. Single-word loads and stores on a ``memoryview`` are
atomic under the GIL; read-modify-write operations are serialized by one
process-wide mutex standing in for hardware compare-and-swap / fetch-add.
"""

from __future__ import annotations

import heapq
import math
import threading

import numpy as np

from .errors import StaleTransactionId, UseAfterFree
from .layout import (
    ABORTED,
    DELETE,
    GEN_MASK,
    GEN_SHIFT,
    INLINE_BYTE_OFFSET,
    INLINE_THRESHOLD,
    INSERT,
    LOCK_FLAG,
    MASK32,
    MASK64,
    POISON_WORD,
    SEALED_FLAG,
    STATE_SHIFT,
    ST_ABORTED,
    ST_COMMITTED,
    ST_COMMITTING,
    TXN_ID_BASE,
    UPDATE,
    WTS_MASK,
)

NAME = "python"

_rmw = threading.Lock()


def load(w, i):
    return w[i]


def store(w, i, v):
    w[i] = v


def cas(w, i, expected, new):
    with _rmw:
        if w[i] == expected:
            w[i] = new
            return True
        return False


def fetch_add(w, i, d):
    with _rmw:
        old = w[i]
        w[i] = (old + d) & MASK64
        return old


def fetch_sub(w, i, d):
    with _rmw:
        old = w[i]
        w[i] = (old - d) & MASK64
        return old


def lookup_status(table, bits, raw):
    """Resolve a tagged transaction id through the table.

    Returns the commit epoch, ``ABORTED``, or ``raw`` itself when the owner
    is still in progress.
    """
    seq = raw - TXN_ID_BASE
    st = table[seq & ((1 << bits) - 1)]
    if (st >> GEN_SHIFT) & GEN_MASK != (seq >> bits) & GEN_MASK:
        raise StaleTransactionId(hex(raw))
    state = st >> STATE_SHIFT
    if state == ST_COMMITTING or state == ST_COMMITTED:
        return st & WTS_MASK
    if state == ST_ABORTED:
        return ABORTED
    return raw


def resolve(words, idx, table, bits):
    raw = words[idx]
    if raw < TXN_ID_BASE or raw == ABORTED:
        return raw
    if raw == POISON_WORD:
        raise UseAfterFree("poisoned timestamp at word %d" % idx)
    try:
        res = lookup_status(table, bits, raw)
    except StaleTransactionId:
        # the owner finished and its slot was reused, which only happens
        # after every copy of the id was stamped: the word has changed
        if words[idx] != raw:
            return resolve(words, idx, table, bits)
        raise
    if res < TXN_ID_BASE:
        # cooperative stamping; losing the race is benign
        cas(words, idx, raw, res)
    return res


def visible(cr, inv, rts, self_id):
    if cr == 0:
        return False
    if cr == self_id:
        return inv == 0
    if cr >= TXN_ID_BASE or cr > rts:
        return False
    if inv == 0:
        return True
    if inv >= TXN_ID_BASE:
        return inv != self_id
    return inv > rts


def _check_poison(words, base):
    if words[base] == POISON_WORD:
        raise UseAfterFree("walked into a reclaimed block")


def chain_latest(words, cap, start, dst):
    off = start
    while off:
        if off > cap:
            raise UseAfterFree("chain link outside the block")
        base = (cap - off) >> 3
        _check_poison(words, base)
        if words[base + 2] == dst:
            return off
        off = words[base + 3] & MASK32
    return 0


def _visible_at(words, base, rts, self_id, table, bits):
    cr = resolve(words, base, table, bits)
    if cr != self_id and (cr >= TXN_ID_BASE or cr > rts or cr == 0):
        return False
    inv = words[base + 1]
    if inv:
        inv = resolve(words, base + 1, table, bits)
    return visible(cr, inv, rts, self_id)


def chain_visible(words, cap, start, dst, rts, self_id, table, bits):
    off = start
    while off:
        if off > cap:
            raise UseAfterFree("chain link outside the block")
        base = (cap - off) >> 3
        _check_poison(words, base)
        if words[base + 2] == dst and _visible_at(words, base, rts, self_id, table, bits):
            return off
        off = words[base + 3] & MASK32
    return 0


def scan_visible(words, cap, top, rts, self_id, table, bits):
    """Offsets of visible non-delete deltas, newest first."""
    out = []
    off = top
    while off >= 64:
        base = (cap - off) >> 3
        raw = words[base]
        if raw != 0 and raw != ABORTED:
            if raw == POISON_WORD:
                raise UseAfterFree("scan of a reclaimed block")
            if (words[base + 4] >> 32) != DELETE and _visible_at(
                words, base, rts, self_id, table, bits
            ):
                out.append(off)
        off -= 64
    return out


def read_property(words, raw, cap, off):
    base = (cap - off) >> 3
    size = words[base + 4] & MASK32
    if size <= INLINE_THRESHOLD:
        start = cap - off + INLINE_BYTE_OFFSET
    else:
        start = words[base + 5] & MASK32
    return bytes(raw[start : start + size])


def _weight_of(words, raw, cap, off):
    base = (cap - off) >> 3
    size = words[base + 4] & MASK32
    if size < 8:
        return 1.0
    if size <= INLINE_THRESHOLD:
        start = cap - off + INLINE_BYTE_OFFSET
    else:
        start = words[base + 5] & MASK32
    return memoryview(raw)[start : start + 8].cast("d")[0]


def scan_edges(words, raw, cap, top, rts, self_id, table, bits, want_weights):
    offs = scan_visible(words, cap, top, rts, self_id, table, bits)
    dsts = [words[((cap - o) >> 3) + 2] for o in offs]
    if not want_weights:
        return dsts, None
    return dsts, [_weight_of(words, raw, cap, o) for o in offs]


def write_delta(words, raw, cap, off, dtype, dst, prev_off, prev_ver, prop, data_off, creation):
    base = (cap - off) >> 3
    size = len(prop)
    words[base + 5] = 0
    words[base + 6] = 0
    if size <= INLINE_THRESHOLD:
        start = cap - off + INLINE_BYTE_OFFSET
        raw[start : start + size] = prop
    else:
        raw[data_off : data_off + size] = prop
        words[base + 5] = data_off
    words[base + 1] = 0
    words[base + 2] = dst
    words[base + 3] = prev_off | (prev_ver << 32)
    words[base + 4] = size | (dtype << 32)
    words[base + 7] = 0
    # publication point: readers skip slots whose creation word is 0
    words[base] = creation


def walk_pending(words, cap, start, stop, txn_id, new_cr, new_inv):
    """Re-stamp this transaction's pending deltas from ``start`` down to ``stop``.

    Creation fields move ``txn_id -> new_cr`` and the invalidation fields of
    the versions they superseded move ``txn_id -> new_inv``.
    """
    n = 0
    off = start
    while off > stop:
        base = (cap - off) >> 3
        if cas(words, base, txn_id, new_cr):
            n += 1
        links = words[base + 3]
        pv = links >> 32
        if pv:
            cas(words, ((cap - pv) >> 3) + 1, txn_id, new_inv)
        off = links & MASK32
    return n


def stamp_block(words, cap, top, table, bits):
    """Resolve every id in a block that no writer touches any more.

    Returns how many timestamps still hold an in-progress transaction id.
    """
    left = 0
    off = top
    while off >= 64:
        base = (cap - off) >> 3
        for i in (base, base + 1):
            raw = words[i]
            if raw >= TXN_ID_BASE and raw != ABORTED:
                res = resolve(words, i, table, bits)
                if res == ABORTED:
                    cas(words, i, raw, ABORTED)
                elif res >= TXN_ID_BASE:
                    left += 1
        off -= 64
    return left


def plan_consolidation(words, cap, top, index, count, min_rts, table, bits):
    """Pick the deltas that survive consolidation.

    Returns ``(offsets, pending_flags, live_edges, data_bytes)`` with offsets
    ascending. Pending deltas (beyond their chain's committed head) are kept
    unconditionally; the newest committed version of every edge is kept unless
    it is a delete every live snapshot already sees; older versions are kept
    while some snapshot at or after ``min_rts`` can still see them.
    """
    heads = [index[2 * i] & MASK32 for i in range(count)]
    seen = set()
    kept = []
    flags = []
    live = 0
    data = 0
    off = top
    while off >= 64:
        base = (cap - off) >> 3
        raw_cr = words[base]
        off_now = off
        off -= 64
        if raw_cr == 0 or raw_cr == ABORTED:
            continue
        cr = resolve(words, base, table, bits)
        if cr == ABORTED:
            continue
        dst = words[base + 2]
        meta = words[base + 4]
        dtype = meta >> 32
        if off_now > heads[dst % count]:
            pend = True
            keep = True
            if dtype != DELETE:
                live += 1
        else:
            pend = False
            inv = resolve(words, base + 1, table, bits) if words[base + 1] else 0
            if inv == ABORTED:
                inv = 0
            if dst not in seen:
                seen.add(dst)
                keep = not (dtype == DELETE and inv == 0 and cr <= min_rts)
                if keep and dtype != DELETE:
                    live += 1
            else:
                keep = inv == 0 or inv >= TXN_ID_BASE or inv > min_rts
        if keep:
            kept.append(off_now)
            flags.append(pend)
            size = meta & MASK32
            if size > INLINE_THRESHOLD:
                data += size
    kept.reverse()
    flags.reverse()
    return kept, flags, live, data


def copy_retained(ow, oraw, ocap, kept, flags, nw, nraw, ncap, ncount, nindex, table, bits):
    """Copy ``kept`` deltas (ascending) into an empty block, relinking chains.

    Timestamps are written resolved where possible. Fills ``nindex`` with
    committed heads and pending heads (lock bits are left to the caller).
    Returns ``(delta_bytes, data_bytes)``.
    """
    remap = {}
    last = [0] * ncount
    committed = [0] * ncount
    pending = [0] * ncount
    noff = 0
    cursor = 0
    for old_off, pend in zip(kept, flags):
        noff += 64
        ob = (ocap - old_off) >> 3
        nb = (ncap - noff) >> 3
        cr = resolve(ow, ob, table, bits)
        inv = resolve(ow, ob + 1, table, bits) if ow[ob + 1] else 0
        if inv == ABORTED:
            inv = 0
        dst = ow[ob + 2]
        links = ow[ob + 3]
        meta = ow[ob + 4]
        size = meta & MASK32
        chain = dst % ncount
        nw[nb + 5] = 0
        nw[nb + 6] = 0
        if size <= INLINE_THRESHOLD:
            s = ocap - old_off + INLINE_BYTE_OFFSET
            d = ncap - noff + INLINE_BYTE_OFFSET
            nraw[d : d + INLINE_THRESHOLD] = oraw[s : s + INLINE_THRESHOLD]
        else:
            s = ow[ob + 5] & MASK32
            nraw[cursor : cursor + size] = oraw[s : s + size]
            nw[nb + 5] = cursor
            cursor += size
        nw[nb + 1] = inv
        nw[nb + 2] = dst
        nw[nb + 3] = last[chain] | (remap.get(links >> 32, 0) << 32)
        nw[nb + 4] = meta
        nw[nb + 7] = 0
        nw[nb] = cr
        remap[old_off] = noff
        last[chain] = noff
        if pend:
            pending[chain] = noff
        else:
            committed[chain] = noff
    for j in range(ncount):
        nindex[2 * j] = committed[j]
        nindex[2 * j + 1] = pending[j]
    return noff, cursor


def pagerank_range(in_indptr, in_src, contrib, out, lo, hi, base, damping):
    """Pull-style PageRank update for vertices ``[lo, hi)``.

    In-neighbour lists must be sorted so summation order is fixed.
    """
    a, b = in_indptr[lo], in_indptr[hi]
    seg = np.bincount(
        np.repeat(np.arange(lo, hi), np.diff(in_indptr[lo : hi + 1])) - lo,
        weights=contrib[in_src[a:b]],
        minlength=hi - lo,
    )
    out[lo:hi] = base + damping * seg


def dijkstra(indptr, indices, weights, source, n):
    dist = [math.inf] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(indptr[u], indptr[u + 1]):
            v = int(indices[k])
            nd = d + weights[k]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.asarray(dist, dtype=np.float64)


# fused edge-write path ---------------------------------------------------------

EW_BUSY = -1
EW_STALE = -2
EW_OVERFLOW = -3
EW_ABSENT = 0
EW_INSERTED = 1
EW_UPDATED = 2
EW_DELETED = 3


def edge_write(words, raw, cap, header, index, chain_count, txn_id, tag, rts, dst, delete, prop, table, bits):
    """Lock, search, validate, allocate and write one checked edge delta.

    Returns an ``EW_*`` code. On any failure a lock taken by this call is
    released again; the caller owns the block's writer section.
    """
    chain = dst % chain_count
    li = 2 * chain
    lw = index[li]
    if lw & LOCK_FLAG:
        if lw >> 33 != tag:
            return EW_BUSY
        fresh = False
    else:
        if not cas(index, li, lw, (tag << 33) | LOCK_FLAG | (lw & MASK32)):
            return EW_BUSY
        fresh = True
    committed = lw & MASK32
    pending = index[li + 1]
    start = pending if pending > committed else committed
    latest = chain_latest(words, cap, start, dst)
    prev_ver = 0
    exists = False
    if latest:
        base = (cap - latest) >> 3
        cr = resolve(words, base, table, bits)
        if cr != txn_id and cr != ABORTED and (cr >= TXN_ID_BASE or cr > rts):
            if fresh:
                index[li] = committed
            return EW_STALE
        if cr != ABORTED:
            prev_ver = latest
            exists = (words[base + 4] >> 32) != DELETE
    if delete and not exists:
        if fresh:
            index[li] = committed
        return EW_ABSENT
    size = 0 if delete else len(prop)
    ext = size if size > INLINE_THRESHOLD else 0
    old = fetch_add(header, 0, (64 << 32) | ext)
    d0, p0 = old >> 32, old & MASK32
    if d0 + 64 + p0 + ext > cap:
        if d0 + p0 <= cap:
            header[3] = SEALED_FLAG | d0
        if fresh:
            index[li] = committed
        return EW_OVERFLOW
    doff = d0 + 64
    if delete:
        write_delta(words, raw, cap, doff, DELETE, dst, start, prev_ver, b"", p0, txn_id)
    else:
        write_delta(words, raw, cap, doff, UPDATE if exists else INSERT, dst, start, prev_ver, prop, p0, txn_id)
    if prev_ver:
        words[((cap - prev_ver) >> 3) + 1] = txn_id
    index[li + 1] = doff
    if delete:
        return EW_DELETED
    return EW_UPDATED if exists else EW_INSERTED


def release_chains(words, cap, index, chain_count, tag, txn_id, dsts, new_cr, new_inv, commit):
    """Stamp (or roll back) and unlock every chain this transaction holds among ``dsts``."""
    seen = set()
    n = 0
    for v in dsts:
        c = v % chain_count
        if c in seen:
            continue
        seen.add(c)
        li = 2 * c
        lw = index[li]
        if not lw & LOCK_FLAG or lw >> 33 != tag:
            continue
        committed = lw & MASK32
        pending = index[li + 1]
        head = committed
        if pending:
            walk_pending(words, cap, pending, committed, txn_id, new_cr, new_inv)
            if commit:
                index[li] = (tag << 33) | LOCK_FLAG | pending
                head = pending
        index[li + 1] = 0
        index[li] = head
        n += 1
    return n
