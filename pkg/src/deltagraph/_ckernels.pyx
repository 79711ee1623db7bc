# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled storage and analytics kernels.

Same contract as ``_pykernels``; word read-modify-writes use the GCC
``__atomic`` builtins with acquire/release ordering.
"""

import numpy as np

from .errors import StaleTransactionId, UseAfterFree

ctypedef unsigned long long u64

cdef extern from *:
    """
    static inline int dg_cas(unsigned long long *p, unsigned long long expected,
                             unsigned long long desired) {
        return __atomic_compare_exchange_n(p, &expected, desired, 0,
                                           __ATOMIC_ACQ_REL, __ATOMIC_ACQUIRE);
    }
    static inline unsigned long long dg_fetch_add(unsigned long long *p,
                                                  unsigned long long d) {
        return __atomic_fetch_add(p, d, __ATOMIC_ACQ_REL);
    }
    static inline unsigned long long dg_fetch_sub(unsigned long long *p,
                                                  unsigned long long d) {
        return __atomic_fetch_sub(p, d, __ATOMIC_ACQ_REL);
    }
    static inline unsigned long long dg_load(unsigned long long *p) {
        return __atomic_load_n(p, __ATOMIC_ACQUIRE);
    }
    static inline void dg_store(unsigned long long *p, unsigned long long v) {
        __atomic_store_n(p, v, __ATOMIC_RELEASE);
    }
    """
    bint dg_cas(u64 *p, u64 expected, u64 desired) nogil
    u64 dg_fetch_add(u64 *p, u64 d) nogil
    u64 dg_fetch_sub(u64 *p, u64 d) nogil
    u64 dg_load(u64 *p) nogil
    void dg_store(u64 *p, u64 v) nogil

from libc.string cimport memcpy, memset
from libc.math cimport INFINITY

NAME = "cython"

cdef u64 TXN_ID_BASE = 1ULL << 63
cdef u64 ABORTED = 0xFFFFFFFFFFFFFFFFULL
cdef u64 POISON_WORD = 0xA5A5A5A5A5A5A5A5ULL
cdef u64 MASK32 = 0xFFFFFFFFULL
cdef u64 GEN_MASK = (1ULL << 22) - 1
cdef u64 WTS_MASK = (1ULL << 40) - 1
cdef int GEN_SHIFT = 40
cdef int STATE_SHIFT = 62
cdef u64 ST_COMMITTING = 1
cdef u64 ST_COMMITTED = 2
cdef u64 ST_ABORTED = 3
cdef u64 DELETE = 3
cdef u64 INLINE_THRESHOLD = 16
cdef Py_ssize_t INLINE_BYTE_OFFSET = 40
cdef u64 ERR = 0xFFFFFFFFFFFFFFFEULL


def load(u64[::1] w, Py_ssize_t i):
    return dg_load(&w[i])


def store(u64[::1] w, Py_ssize_t i, u64 v):
    dg_store(&w[i], v)


def cas(u64[::1] w, Py_ssize_t i, u64 expected, u64 new):
    return dg_cas(&w[i], expected, new)


def fetch_add(u64[::1] w, Py_ssize_t i, u64 d):
    return dg_fetch_add(&w[i], d)


def fetch_sub(u64[::1] w, Py_ssize_t i, u64 d):
    return dg_fetch_sub(&w[i], d)


cdef inline u64 _lookup(u64 *table, int bits, u64 raw) except? 0xFFFFFFFFFFFFFFFEULL:
    cdef u64 seq = raw - TXN_ID_BASE
    cdef u64 st = dg_load(&table[seq & ((1ULL << bits) - 1)])
    cdef u64 state
    if ((st >> GEN_SHIFT) & GEN_MASK) != ((seq >> bits) & GEN_MASK):
        raise StaleTransactionId(hex(raw))
    state = st >> STATE_SHIFT
    if state == ST_COMMITTING or state == ST_COMMITTED:
        return st & WTS_MASK
    if state == ST_ABORTED:
        return ABORTED
    return raw


cdef inline u64 _resolve(u64 *w, Py_ssize_t idx, u64 *table, int bits) except? 0xFFFFFFFFFFFFFFFEULL:
    cdef u64 raw = dg_load(&w[idx])
    cdef u64 res
    if raw < TXN_ID_BASE or raw == ABORTED:
        return raw
    if raw == POISON_WORD:
        raise UseAfterFree("poisoned timestamp at word %d" % idx)
    try:
        res = _lookup(table, bits, raw)
    except StaleTransactionId:
        # the owner finished and its slot was reused, which only happens
        # after every copy of the id was stamped: the word has changed
        if dg_load(&w[idx]) != raw:
            return _resolve(w, idx, table, bits)
        raise
    if res < TXN_ID_BASE:
        dg_cas(&w[idx], raw, res)
    return res


cdef inline bint _visible(u64 cr, u64 inv, u64 rts, u64 self_id) noexcept nogil:
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


cdef inline int _visible_at(u64 *w, Py_ssize_t base, u64 rts, u64 self_id,
                            u64 *table, int bits) except -1:
    cdef u64 cr = _resolve(w, base, table, bits)
    cdef u64 inv
    if cr != self_id and (cr >= TXN_ID_BASE or cr > rts or cr == 0):
        return 0
    inv = dg_load(&w[base + 1])
    if inv:
        inv = _resolve(w, base + 1, table, bits)
    return 1 if _visible(cr, inv, rts, self_id) else 0


def lookup_status(u64[::1] table, int bits, u64 raw):
    return _lookup(&table[0], bits, raw)


def resolve(u64[::1] words, Py_ssize_t idx, u64[::1] table, int bits):
    return _resolve(&words[0], idx, &table[0], bits)


def visible(u64 cr, u64 inv, u64 rts, u64 self_id):
    return _visible(cr, inv, rts, self_id)


def chain_latest(u64[::1] words, u64 cap, u64 start, u64 dst):
    cdef u64 *w = &words[0]
    cdef u64 off = start
    cdef Py_ssize_t base
    while off:
        if off > cap:
            raise UseAfterFree("chain link outside the block")
        base = <Py_ssize_t>((cap - off) >> 3)
        if w[base] == POISON_WORD:
            raise UseAfterFree("walked into a reclaimed block")
        if w[base + 2] == dst:
            return off
        off = w[base + 3] & MASK32
    return 0


def chain_visible(u64[::1] words, u64 cap, u64 start, u64 dst, u64 rts, u64 self_id,
                  u64[::1] table, int bits):
    cdef u64 *w = &words[0]
    cdef u64 *t = &table[0]
    cdef u64 off = start
    cdef Py_ssize_t base
    while off:
        if off > cap:
            raise UseAfterFree("chain link outside the block")
        base = <Py_ssize_t>((cap - off) >> 3)
        if w[base] == POISON_WORD:
            raise UseAfterFree("walked into a reclaimed block")
        if w[base + 2] == dst and _visible_at(w, base, rts, self_id, t, bits):
            return off
        off = w[base + 3] & MASK32
    return 0


def scan_visible(u64[::1] words, u64 cap, u64 top, u64 rts, u64 self_id,
                 u64[::1] table, int bits):
    cdef u64 *w = &words[0]
    cdef u64 *t = &table[0]
    cdef u64 off = top
    cdef u64 raw
    cdef Py_ssize_t base
    cdef list out = []
    while off >= 64:
        base = <Py_ssize_t>((cap - off) >> 3)
        raw = dg_load(&w[base])
        if raw != 0 and raw != ABORTED:
            if raw == POISON_WORD:
                raise UseAfterFree("scan of a reclaimed block")
            if (w[base + 4] >> 32) != DELETE and _visible_at(w, base, rts, self_id, t, bits):
                out.append(off)
        off -= 64
    return out


def read_property(u64[::1] words, unsigned char[::1] raw, u64 cap, u64 off):
    cdef Py_ssize_t base = <Py_ssize_t>((cap - off) >> 3)
    cdef u64 size = words[base + 4] & MASK32
    cdef Py_ssize_t start
    if size <= INLINE_THRESHOLD:
        start = <Py_ssize_t>(cap - off) + INLINE_BYTE_OFFSET
    else:
        start = <Py_ssize_t>(words[base + 5] & MASK32)
    return (<char *>&raw[0])[start:start + <Py_ssize_t>size]


cdef inline double _weight_of(u64 *w, unsigned char *raw, u64 cap, u64 off) noexcept:
    cdef Py_ssize_t base = <Py_ssize_t>((cap - off) >> 3)
    cdef u64 size = w[base + 4] & MASK32
    cdef Py_ssize_t start
    cdef double x
    if size < 8:
        return 1.0
    if size <= INLINE_THRESHOLD:
        start = <Py_ssize_t>(cap - off) + INLINE_BYTE_OFFSET
    else:
        start = <Py_ssize_t>(w[base + 5] & MASK32)
    memcpy(&x, raw + start, 8)
    return x


def scan_edges(u64[::1] words, unsigned char[::1] raw, u64 cap, u64 top, u64 rts,
               u64 self_id, u64[::1] table, int bits, bint want_weights):
    cdef u64 *w = &words[0]
    cdef u64 *t = &table[0]
    cdef u64 off = top
    cdef u64 r
    cdef Py_ssize_t base
    cdef list dsts = []
    cdef list weights = [] if want_weights else None
    while off >= 64:
        base = <Py_ssize_t>((cap - off) >> 3)
        r = dg_load(&w[base])
        if r != 0 and r != ABORTED:
            if r == POISON_WORD:
                raise UseAfterFree("scan of a reclaimed block")
            if (w[base + 4] >> 32) != DELETE and _visible_at(w, base, rts, self_id, t, bits):
                dsts.append(w[base + 2])
                if want_weights:
                    weights.append(_weight_of(w, &raw[0], cap, off))
        off -= 64
    return dsts, weights


def write_delta(u64[::1] words, unsigned char[::1] raw, u64 cap, u64 off, u64 dtype,
                u64 dst, u64 prev_off, u64 prev_ver, const unsigned char[::1] prop,
                u64 data_off, u64 creation):
    cdef u64 *w = &words[0]
    cdef Py_ssize_t base = <Py_ssize_t>((cap - off) >> 3)
    cdef Py_ssize_t size = prop.shape[0]
    w[base + 5] = 0
    w[base + 6] = 0
    if size <= <Py_ssize_t>INLINE_THRESHOLD:
        if size:
            memcpy(&raw[<Py_ssize_t>(cap - off) + INLINE_BYTE_OFFSET], &prop[0], size)
    else:
        memcpy(&raw[<Py_ssize_t>data_off], &prop[0], size)
        w[base + 5] = data_off
    w[base + 1] = 0
    w[base + 2] = dst
    w[base + 3] = prev_off | (prev_ver << 32)
    w[base + 4] = <u64>size | (dtype << 32)
    w[base + 7] = 0
    dg_store(&w[base], creation)


def walk_pending(u64[::1] words, u64 cap, u64 start, u64 stop, u64 txn_id, u64 new_cr,
                 u64 new_inv):
    cdef u64 *w = &words[0]
    cdef u64 off = start
    cdef u64 links, pv
    cdef Py_ssize_t base
    cdef long n = 0
    while off > stop:
        base = <Py_ssize_t>((cap - off) >> 3)
        if dg_cas(&w[base], txn_id, new_cr):
            n += 1
        links = w[base + 3]
        pv = links >> 32
        if pv:
            dg_cas(&w[<Py_ssize_t>((cap - pv) >> 3) + 1], txn_id, new_inv)
        off = links & MASK32
    return n


def stamp_block(u64[::1] words, u64 cap, u64 top, u64[::1] table, int bits):
    cdef u64 *w = &words[0]
    cdef u64 *t = &table[0]
    cdef u64 off = top
    cdef Py_ssize_t base, i
    cdef u64 raw, res
    cdef long left = 0
    while off >= 64:
        base = <Py_ssize_t>((cap - off) >> 3)
        for i in range(base, base + 2):
            raw = dg_load(&w[i])
            if raw >= TXN_ID_BASE and raw != ABORTED:
                res = _resolve(w, i, t, bits)
                if res == ABORTED:
                    dg_cas(&w[i], raw, ABORTED)
                elif res >= TXN_ID_BASE:
                    left += 1
        off -= 64
    return left


def plan_consolidation(u64[::1] words, u64 cap, u64 top, u64[::1] index, u64 count,
                       u64 min_rts, u64[::1] table, int bits):
    cdef u64 *w = &words[0]
    cdef u64 *t = &table[0]
    cdef u64 off = top
    cdef u64 off_now, raw_cr, cr, inv, dst, meta, dtype, size
    cdef Py_ssize_t base
    cdef bint pend, keep
    cdef long live = 0
    cdef u64 data = 0
    cdef set seen = set()
    cdef list kept = []
    cdef list flags = []
    heads = np.empty(count, dtype=np.uint64)
    cdef u64[::1] h = heads
    cdef u64 i
    for i in range(count):
        h[i] = index[2 * i] & MASK32
    while off >= 64:
        base = <Py_ssize_t>((cap - off) >> 3)
        raw_cr = w[base]
        off_now = off
        off -= 64
        if raw_cr == 0 or raw_cr == ABORTED:
            continue
        cr = _resolve(w, base, t, bits)
        if cr == ABORTED:
            continue
        dst = w[base + 2]
        meta = w[base + 4]
        dtype = meta >> 32
        if off_now > h[dst % count]:
            pend = True
            keep = True
            if dtype != DELETE:
                live += 1
        else:
            pend = False
            inv = _resolve(w, base + 1, t, bits) if w[base + 1] else 0
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


def copy_retained(u64[::1] ow, unsigned char[::1] oraw, u64 ocap, list kept, list flags,
                  u64[::1] nw, unsigned char[::1] nraw, u64 ncap, u64 ncount,
                  u64[::1] nindex, u64[::1] table, int bits):
    cdef u64 *o = &ow[0]
    cdef u64 *n = &nw[0]
    cdef u64 *t = &table[0]
    cdef Py_ssize_t k, nk = len(kept)
    cdef u64 old_off, noff = 0, cursor = 0
    cdef u64 cr, inv, dst, links, meta, size, chain, pv_new, s
    cdef Py_ssize_t ob, nb
    cdef dict remap = {}
    last_a = np.zeros(ncount, dtype=np.uint64)
    comm_a = np.zeros(ncount, dtype=np.uint64)
    pend_a = np.zeros(ncount, dtype=np.uint64)
    cdef u64[::1] last = last_a
    cdef u64[::1] committed = comm_a
    cdef u64[::1] pending = pend_a
    for k in range(nk):
        old_off = kept[k]
        noff += 64
        ob = <Py_ssize_t>((ocap - old_off) >> 3)
        nb = <Py_ssize_t>((ncap - noff) >> 3)
        cr = _resolve(o, ob, t, bits)
        inv = _resolve(o, ob + 1, t, bits) if o[ob + 1] else 0
        if inv == ABORTED:
            inv = 0
        dst = o[ob + 2]
        links = o[ob + 3]
        meta = o[ob + 4]
        size = meta & MASK32
        chain = dst % ncount
        n[nb + 5] = 0
        n[nb + 6] = 0
        if size <= INLINE_THRESHOLD:
            memcpy(&nraw[<Py_ssize_t>(ncap - noff) + INLINE_BYTE_OFFSET],
                   &oraw[<Py_ssize_t>(ocap - old_off) + INLINE_BYTE_OFFSET], INLINE_THRESHOLD)
        else:
            s = o[ob + 5] & MASK32
            memcpy(&nraw[<Py_ssize_t>cursor], &oraw[<Py_ssize_t>s], size)
            n[nb + 5] = cursor
            cursor += size
        pv_new = remap.get(links >> 32, 0)
        n[nb + 1] = inv
        n[nb + 2] = dst
        n[nb + 3] = last[chain] | (pv_new << 32)
        n[nb + 4] = meta
        n[nb + 7] = 0
        dg_store(&n[nb], cr)
        remap[old_off] = noff
        last[chain] = noff
        if flags[k]:
            pending[chain] = noff
        else:
            committed[chain] = noff
    for chain in range(ncount):
        nindex[2 * chain] = committed[chain]
        nindex[2 * chain + 1] = pending[chain]
    return noff, cursor


cdef void _pr_range(const long long *indptr, const long long *src, const double *contrib,
                    double *out, Py_ssize_t lo, Py_ssize_t hi, double base,
                    double damping) noexcept nogil:
    cdef Py_ssize_t v, k
    cdef double s
    for v in range(lo, hi):
        s = 0.0
        for k in range(indptr[v], indptr[v + 1]):
            s += contrib[src[k]]
        out[v] = base + damping * s


def pagerank_range(const long long[::1] in_indptr, const long long[::1] in_src,
                   const double[::1] contrib, double[::1] out, Py_ssize_t lo,
                   Py_ssize_t hi, double base, double damping):
    if hi <= lo:
        return
    with nogil:
        _pr_range(&in_indptr[0], &in_src[0] if in_src.shape[0] else NULL, &contrib[0],
                  &out[0], lo, hi, base, damping)


cdef inline void _sift_up(double *hk, long long *hv, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t p
    cdef double k = hk[i]
    cdef long long v = hv[i]
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] <= k:
            break
        hk[i] = hk[p]
        hv[i] = hv[p]
        i = p
    hk[i] = k
    hv[i] = v


cdef inline void _sift_down(double *hk, long long *hv, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i = 0, c
    cdef double k = hk[0]
    cdef long long v = hv[0]
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and hk[c + 1] < hk[c]:
            c += 1
        if hk[c] >= k:
            break
        hk[i] = hk[c]
        hv[i] = hv[c]
        i = c
    hk[i] = k
    hv[i] = v


def dijkstra(const long long[::1] indptr, const long long[::1] indices,
             const double[::1] weights, Py_ssize_t source, Py_ssize_t n):
    dist_a = np.full(n, np.inf, dtype=np.float64)
    cdef double[::1] dist = dist_a
    cdef Py_ssize_t m = indices.shape[0]
    heap_k = np.empty(m + 1, dtype=np.float64)
    heap_v = np.empty(m + 1, dtype=np.int64)
    done_a = np.zeros(n, dtype=np.uint8)
    cdef double[::1] hk = heap_k
    cdef long long[::1] hv = heap_v
    cdef unsigned char[::1] done = done_a
    cdef Py_ssize_t size = 1, k, u, v
    cdef double d, nd
    dist[source] = 0.0
    hk[0] = 0.0
    hv[0] = source
    with nogil:
        while size > 0:
            d = hk[0]
            u = hv[0]
            size -= 1
            if size > 0:
                hk[0] = hk[size]
                hv[0] = hv[size]
                _sift_down(&hk[0], &hv[0], size)
            if done[u]:
                continue
            done[u] = 1
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                nd = d + weights[k]
                if nd < dist[v]:
                    dist[v] = nd
                    hk[size] = nd
                    hv[size] = v
                    size += 1
                    _sift_up(&hk[0], &hv[0], size - 1)
    return dist_a


# fused edge-write path ---------------------------------------------------------

EW_BUSY = -1
EW_STALE = -2
EW_OVERFLOW = -3
EW_ABSENT = 0
EW_INSERTED = 1
EW_UPDATED = 2
EW_DELETED = 3

cdef u64 LOCK_FLAG = 1ULL << 32
cdef u64 SEALED_FLAG = 1ULL << 63


cdef inline u64 _chain_latest(u64 *w, u64 cap, u64 start, u64 dst) except? 0xFFFFFFFFFFFFFFFEULL:
    cdef u64 off = start
    cdef Py_ssize_t base
    while off:
        if off > cap:
            raise UseAfterFree("chain link outside the block")
        base = <Py_ssize_t>((cap - off) >> 3)
        if w[base] == POISON_WORD:
            raise UseAfterFree("walked into a reclaimed block")
        if w[base + 2] == dst:
            return off
        off = w[base + 3] & MASK32
    return 0


cdef inline void _walk(u64 *w, u64 cap, u64 start, u64 stop, u64 txn_id, u64 new_cr,
                       u64 new_inv) noexcept nogil:
    cdef u64 off = start
    cdef u64 links, pv
    cdef Py_ssize_t base
    while off > stop:
        base = <Py_ssize_t>((cap - off) >> 3)
        dg_cas(&w[base], txn_id, new_cr)
        links = w[base + 3]
        pv = links >> 32
        if pv:
            dg_cas(&w[<Py_ssize_t>((cap - pv) >> 3) + 1], txn_id, new_inv)
        off = links & MASK32


def edge_write(u64[::1] words, unsigned char[::1] raw, u64 cap, u64[::1] header,
               u64[::1] index, u64 chain_count, u64 txn_id, u64 tag, u64 rts, u64 dst,
               bint delete, const unsigned char[::1] prop, u64[::1] table, int bits):
    cdef u64 *w = &words[0]
    cdef u64 *ix = &index[0]
    cdef u64 chain = dst % chain_count
    cdef Py_ssize_t li = <Py_ssize_t>(2 * chain)
    cdef u64 lw = dg_load(&ix[li])
    cdef bint fresh = False
    cdef u64 committed, pending, start, latest, cr, prev_ver = 0, ext, old, d0, p0, doff, dtype
    cdef Py_ssize_t base, size, nb
    cdef bint exists = False
    if lw & LOCK_FLAG:
        if (lw >> 33) != tag:
            return EW_BUSY
    else:
        if not dg_cas(&ix[li], lw, (tag << 33) | LOCK_FLAG | (lw & MASK32)):
            return EW_BUSY
        fresh = True
    committed = lw & MASK32
    pending = dg_load(&ix[li + 1])
    start = pending if pending > committed else committed
    latest = _chain_latest(w, cap, start, dst)
    if latest:
        base = <Py_ssize_t>((cap - latest) >> 3)
        cr = _resolve(w, base, &table[0], bits)
        if cr != txn_id and cr != ABORTED and (cr >= TXN_ID_BASE or cr > rts):
            if fresh:
                dg_store(&ix[li], committed)
            return EW_STALE
        if cr != ABORTED:
            prev_ver = latest
            exists = (w[base + 4] >> 32) != DELETE
    if delete and not exists:
        if fresh:
            dg_store(&ix[li], committed)
        return EW_ABSENT
    size = 0 if delete else prop.shape[0]
    ext = <u64>size if <u64>size > INLINE_THRESHOLD else 0
    old = dg_fetch_add(&header[0], (64ULL << 32) | ext)
    d0 = old >> 32
    p0 = old & MASK32
    if d0 + 64 + p0 + ext > cap:
        if d0 + p0 <= cap:
            dg_store(&header[3], SEALED_FLAG | d0)
        if fresh:
            dg_store(&ix[li], committed)
        return EW_OVERFLOW
    doff = d0 + 64
    nb = <Py_ssize_t>((cap - doff) >> 3)
    w[nb + 5] = 0
    w[nb + 6] = 0
    if ext:
        memcpy(&raw[<Py_ssize_t>p0], &prop[0], size)
        w[nb + 5] = p0
    elif size:
        memcpy(&raw[<Py_ssize_t>(cap - doff) + INLINE_BYTE_OFFSET], &prop[0], size)
    dtype = DELETE if delete else (2 if exists else 1)
    w[nb + 1] = 0
    w[nb + 2] = dst
    w[nb + 3] = start | (prev_ver << 32)
    w[nb + 4] = <u64>size | (dtype << 32)
    w[nb + 7] = 0
    dg_store(&w[nb], txn_id)
    if prev_ver:
        dg_store(&w[<Py_ssize_t>((cap - prev_ver) >> 3) + 1], txn_id)
    dg_store(&ix[li + 1], doff)
    if delete:
        return EW_DELETED
    return EW_UPDATED if exists else EW_INSERTED


def release_chains(u64[::1] words, u64 cap, u64[::1] index, u64 chain_count, u64 tag,
                   u64 txn_id, dsts, u64 new_cr, u64 new_inv, bint commit):
    cdef u64 *w = &words[0]
    cdef u64 *ix = &index[0]
    cdef set seen = set()
    cdef u64 c, lw, committed, pending, head
    cdef Py_ssize_t li
    cdef long n = 0
    for v in dsts:
        c = <u64>v % chain_count
        if c in seen:
            continue
        seen.add(c)
        li = <Py_ssize_t>(2 * c)
        lw = dg_load(&ix[li])
        if not (lw & LOCK_FLAG) or (lw >> 33) != tag:
            continue
        committed = lw & MASK32
        pending = dg_load(&ix[li + 1])
        head = committed
        if pending:
            _walk(w, cap, pending, committed, txn_id, new_cr, new_inv)
            if commit:
                dg_store(&ix[li], (tag << 33) | LOCK_FLAG | pending)
                head = pending
        dg_store(&ix[li + 1], 0)
        dg_store(&ix[li], head)
        n += 1
    return n
