"""Compiled column sweep for the incremental triple index.

The per-column refinement touches every live class, and mid-sweep the live
population reaches the count of prefix-covering triples (tens of thousands
at N=300), so the sweep runs as a numba kernel over packed uint64 masks.
Deduplication and box merging group classes by a 64-bit FNV hash of their
words and verify equality exactly within hash runs, so correctness never
depends on the hash.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)
MERGE_MIN = 512  # below this, merge passes cost more than they save


@njit(cache=True, inline="always")
def _popcount64(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + (
        (v >> np.uint64(2)) & np.uint64(0x3333333333333333)
    )
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _comp_key(comp):
    """Canonical order key: (popcount, lowest set bit); assumes comp nonzero.

    Size-first ordering keeps singleton slots in front of large "arbitrary
    third" sets, so classes over the same near-covering pair land in the
    same slot positions and the positional merge passes can group them.
    """
    size = np.int64(0)
    lsb = np.int64(-1)
    for w in range(comp.shape[0]):
        v = comp[w]
        if v != np.uint64(0):
            size += np.int64(_popcount64(v))
            if lsb < 0:
                low = v & (~v + np.uint64(1))
                lsb = w * 64 + np.int64(_popcount64(low - np.uint64(1)))
    return size * np.int64(1 << 32) + lsb


@njit(cache=True)
def _sort_components(cls):
    """Insertion-sort the 2 or 3 components of one class by (size, lowest bit)."""
    k = cls.shape[0]
    for i in range(1, k):
        key = _comp_key(cls[i])
        j = i
        while j > 0 and _comp_key(cls[j - 1]) > key:
            for w in range(cls.shape[1]):
                tmp = cls[j, w]
                cls[j, w] = cls[j - 1, w]
                cls[j - 1, w] = tmp
            j -= 1


@njit(cache=True)
def _row_hash(cls, lo, hi):
    h = _FNV_OFFSET
    for s in range(lo, hi):
        for w in range(cls.shape[1]):
            h = (h ^ cls[s, w]) * _FNV_PRIME
    return h


@njit(cache=True)
def _rows_equal(a, b):
    for s in range(a.shape[0]):
        for w in range(a.shape[1]):
            if a[s, w] != b[s, w]:
                return False
    return True


@njit(cache=True, inline="always")
def _fmix(h):
    # Avalanche finalizer: FNV's low bits are too regular on sparse masks
    # for open addressing, which indexes by the low bits.
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xC4CEB9FE1A85EC53)
    h ^= h >> np.uint64(33)
    return h


@njit(cache=True, inline="always")
def _table_size(count):
    size = 2
    while size < 2 * count:
        size <<= 1
    return size


@njit(cache=True)
def _dedup(classes, count):
    """Exact in-place deduplication of classes[:count]; returns the new count.

    Open-addressing table keyed by a full-row hash; hashes are compared
    first and equal hashes verified by comparing the rows, so collisions
    only cost extra probes.  Survivors keep their first-occurrence order.
    """
    if count <= 1:
        return count
    size = _table_size(count)
    mask = np.int64(size - 1)
    table = np.zeros(size, dtype=np.int64)  # 0 = empty, else survivor index + 1
    hashes = np.empty(count, dtype=np.uint64)
    out = 0
    for i in range(count):
        h = _fmix(_row_hash(classes[i], 0, classes.shape[1]))
        slot = np.int64(h & np.uint64(0x7FFFFFFFFFFFFFFF)) & mask
        while True:
            t = table[slot]
            if t == 0:
                if out != i:
                    classes[out] = classes[i]
                hashes[out] = h
                table[slot] = out + 1
                out += 1
                break
            if hashes[t - 1] == h and _rows_equal(classes[t - 1], classes[i]):
                break
            slot = (slot + 1) & mask
    return out


@njit(cache=True)
def _other_slots_equal(a, b, slot):
    for s in range(a.shape[0]):
        if s == slot:
            continue
        for w in range(a.shape[1]):
            if a[s, w] != b[s, w]:
                return False
    return True


@njit(cache=True)
def _merge_pass(classes, count, slot):
    """OR together the `slot` components of classes equal on every other slot.

    Same open-addressing scheme as _dedup, keyed by the non-free slots;
    the first class of each group survives (in input order) and absorbs
    the free slots of its group.
    """
    if count <= 1:
        return count
    k = classes.shape[1]
    size = _table_size(count)
    mask = np.int64(size - 1)
    table = np.zeros(size, dtype=np.int64)
    hashes = np.empty(count, dtype=np.uint64)
    out = 0
    for i in range(count):
        h = _FNV_OFFSET
        for s in range(k):
            if s == slot:
                continue
            for w in range(classes.shape[2]):
                h = (h ^ classes[i, s, w]) * _FNV_PRIME
        h = _fmix(h)
        slot_idx = np.int64(h & np.uint64(0x7FFFFFFFFFFFFFFF)) & mask
        while True:
            t = table[slot_idx]
            if t == 0:
                if out != i:
                    classes[out] = classes[i]
                hashes[out] = h
                table[slot_idx] = out + 1
                out += 1
                break
            if hashes[t - 1] == h and _other_slots_equal(classes[t - 1], classes[i], slot):
                for w in range(classes.shape[2]):
                    classes[t - 1, slot, w] |= classes[i, slot, w]
                break
            slot_idx = (slot_idx + 1) & mask
    for g in range(out):  # merged slots may have a new lowest bit
        _sort_components(classes[g])
    return out


@njit(cache=True)
def _compress(classes, count, merge_min):
    count = _dedup(classes, count)
    if count > merge_min:
        before = count
        for slot in range(classes.shape[1]):
            count = _merge_pass(classes, count, slot)
        if count < before:
            count = _dedup(classes, count)
    return count


@njit(cache=True, inline="always")
def _emit(buf, count, cls, prune):
    """Append one class if no component is empty; components get pruned by mask."""
    k = buf.shape[1]
    words = buf.shape[2]
    for s in range(k):
        nonzero = False
        for w in range(words):
            v = cls[s, w] & prune[w]
            buf[count, s, w] = v
            if v != np.uint64(0):
                nonzero = True
        if not nonzero:
            return count
    _sort_components(buf[count])
    return count + 1


@njit(cache=True)
def sweep(cols, full, merge_min):
    """Run the whole column induction; returns (l1, pairs, triples, stats).

    stats[j] = (pair classes, triple classes) after column j; the sweep
    stops early once every structure is empty, since later columns cannot
    repopulate them.
    """
    m, words = cols.shape
    l1 = cols[0].copy()
    pairs = np.zeros((1, 2, words), dtype=np.uint64)
    n_pairs = 0
    triples = np.zeros((1, 3, words), dtype=np.uint64)
    n_triples = 0
    stats = np.zeros((m, 2), dtype=np.int64)
    cls2 = np.zeros((2, words), dtype=np.uint64)
    cls3 = np.zeros((3, words), dtype=np.uint64)

    for j in range(1, m):
        c = cols[j]
        new_l1 = np.empty(words, dtype=np.uint64)
        notc = np.empty(words, dtype=np.uint64)
        keep_mask = np.empty(words, dtype=np.uint64)  # ~new_l1: prune L1 members
        for w in range(words):
            new_l1[w] = l1[w] & c[w]
            notc[w] = ~c[w] & full[w]
            keep_mask[w] = ~new_l1[w]

        pbuf = np.empty((2 * n_pairs + 1, 2, words), dtype=np.uint64)
        np_new = 0
        tbuf = np.empty((n_pairs + 3 * n_triples, 3, words), dtype=np.uint64)
        nt_new = 0

        for i in range(n_pairs):
            a = pairs[i, 0]
            b = pairs[i, 1]
            for w in range(words):
                cls2[0, w] = a[w] & c[w]
                cls2[1, w] = b[w]
            np_new = _emit(pbuf, np_new, cls2, keep_mask)
            for w in range(words):
                cls2[0, w] = a[w] & notc[w]
                cls2[1, w] = b[w] & c[w]
            np_new = _emit(pbuf, np_new, cls2, keep_mask)
            for w in range(words):
                cls3[0, w] = a[w] & notc[w]
                cls3[1, w] = b[w] & notc[w]
                cls3[2, w] = c[w] & ~(a[w] | b[w])
            nt_new = _emit(tbuf, nt_new, cls3, keep_mask)

        for w in range(words):
            cls2[0, w] = l1[w] & notc[w]
            cls2[1, w] = c[w] & ~l1[w]
        np_new = _emit(pbuf, np_new, cls2, keep_mask)

        for i in range(n_triples):
            k1 = triples[i, 0]
            k2 = triples[i, 1]
            k3 = triples[i, 2]
            for w in range(words):
                cls3[0, w] = k1[w] & c[w]
                cls3[1, w] = k2[w]
                cls3[2, w] = k3[w]
            nt_new = _emit(tbuf, nt_new, cls3, keep_mask)
            for w in range(words):
                cls3[0, w] = k1[w] & notc[w]
                cls3[1, w] = k2[w] & c[w]
                cls3[2, w] = k3[w]
            nt_new = _emit(tbuf, nt_new, cls3, keep_mask)
            for w in range(words):
                cls3[0, w] = k1[w] & notc[w]
                cls3[1, w] = k2[w] & notc[w]
                cls3[2, w] = k3[w] & c[w]
            nt_new = _emit(tbuf, nt_new, cls3, keep_mask)

        n_pairs = _compress(pbuf, np_new, merge_min)
        pairs = pbuf
        n_triples = _compress(tbuf, nt_new, merge_min)
        triples = tbuf
        l1 = new_l1
        stats[j, 0] = n_pairs
        stats[j, 1] = n_triples

        alive = n_pairs > 0 or n_triples > 0
        if not alive:
            for w in range(words):
                if l1[w] != np.uint64(0):
                    alive = True
                    break
        if not alive:
            break

    return l1, pairs[:n_pairs].copy(), triples[:n_triples].copy(), stats
