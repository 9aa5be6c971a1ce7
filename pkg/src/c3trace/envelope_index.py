"""Enumeration of parent triples: candidate coalitions of three users.

A triple {i1, i2, i3} is a parent of the resolved word y' when every column
of y' matches at least one of the three codewords (y' lies in the bitwise
envelope of the rows).  Two enumerators are provided:

* `triples_naive` checks all C(N,3) triples; it is the testing oracle and
  the deliberately cubic baseline.
* `triples_indexed` sweeps the columns once, maintaining a compressed
  description of exactly the triples whose rows cover the current prefix:
  a set L1 of users that cover the prefix alone, pair classes {K1, K2}
  (one user from each side plus an arbitrary third), and triple classes
  {K1, K2, K3} (one user from each part).  Column j refines each class by
  intersecting with C_j = {i : w[i,j] = y'[j]}: a class splits into the
  subclasses where the first, second, or third slot covers column j, and
  classes acquiring an empty component are dropped.

All user sets are packed little-endian into uint64 words so a column step
is a handful of vectorized bit operations over every class at once.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _index_kernel as _kernel
from .errors import ExpansionOverflowError, ParameterError

Triple = tuple[int, int, int]

DEFAULT_EXPAND_CAP = 10_000_000
DEFAULT_ORACLE_CAP = 64
_U64_ONE = np.uint64(1)
_U64_FULL = ~np.uint64(0)


def expansion_cap() -> int:
    """Default triple-materialization cap, overridable via C3TRACE_MAX_EXPAND."""
    raw = os.environ.get("C3TRACE_MAX_EXPAND")
    if raw is None:
        return DEFAULT_EXPAND_CAP
    try:
        cap = int(raw)
        if cap < 1:
            raise ValueError
    except ValueError:
        raise ParameterError(f"C3TRACE_MAX_EXPAND={raw!r} is not a positive integer")
    return cap


# ---------------------------------------------------------------------------
# packed bitmask helpers


def _n_words(n_bits: int) -> int:
    return (n_bits + 63) // 64


def _full_mask(n_bits: int) -> np.ndarray:
    full = np.full(_n_words(n_bits), _U64_FULL, dtype=np.uint64)
    rem = n_bits % 64
    if rem:
        full[-1] = (_U64_ONE << np.uint64(rem)) - _U64_ONE
    return full


def _pack_rows(rows: np.ndarray, n_bits: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=bool)
    pad = _n_words(n_bits) * 64 - rows.shape[-1]
    if pad:
        rows = np.concatenate([rows, np.zeros(rows.shape[:-1] + (pad,), bool)], axis=-1)
    return np.packbits(rows, axis=-1, bitorder="little").view(np.uint64)

def _mask_to_users(mask: np.ndarray, n_users: int) -> np.ndarray:
    bits = np.unpackbits(mask.view(np.uint8), bitorder="little")[:n_users]
    return np.nonzero(bits)[0]


def _users_to_mask(users, n_users: int) -> np.ndarray:
    mask = np.zeros(_n_words(n_users), dtype=np.uint64)
    for u in users:
        u = int(u)
        if not (0 <= u < n_users):
            raise ParameterError(f"user index {u} out of range [0, {n_users})")
        mask[u >> 6] |= _U64_ONE << np.uint64(u & 63)
    return mask


def _popcount(mask: np.ndarray) -> int:
    return int(np.bitwise_count(mask).sum())


def _lowest_user(mask: np.ndarray) -> int | None:
    nz = np.nonzero(mask)[0]
    if nz.size == 0:
        return None
    w = int(nz[0])
    v = mask[w]
    return w * 64 + int(np.bitwise_count((v & (~v + _U64_ONE)) - _U64_ONE))


def _lowest_users_outside(mask: np.ndarray, n_users: int, count: int) -> list[int]:
    avail = _full_mask(n_users) & ~mask
    picked = []
    while len(picked) < count:
        u = _lowest_user(avail)
        if u is None:
            return []
        picked.append(u)
        avail[u >> 6] &= ~(_U64_ONE << np.uint64(u & 63))
    return picked


# ---------------------------------------------------------------------------
# column match sets


def _bits_of(matrix) -> np.ndarray:
    bits = getattr(matrix, "bits", matrix)
    return np.asarray(bits, dtype=np.uint8)


def match_columns(matrix, yprime) -> np.ndarray:
    """Packed per-column match masks: row j holds C_j = {i : w[i,j] = y'[j]}."""
    bits = _bits_of(matrix)
    word = np.asarray(yprime, dtype=np.uint8)
    if word.shape != (bits.shape[1],):
        raise ParameterError("resolved word length does not match the code matrix")
    return _pack_rows((bits == word[None, :]).T, bits.shape[0])


def match_set(matrix, yprime, column: int) -> set[int]:
    """The users whose bit agrees with y' at one column."""
    bits = _bits_of(matrix)
    return set(np.nonzero(bits[:, column] == yprime[column])[0].tolist())


# ---------------------------------------------------------------------------
# naive oracle


def triples_naive(matrix, yprime, cap: int | None = DEFAULT_ORACLE_CAP) -> set[Triple]:
    """All parent triples by direct enumeration; Theta(N^3) column checks.

    Intended as the small-instance testing oracle; pass cap=None to run it
    at scale deliberately (e.g. for baseline timing).
    """
    bits = _bits_of(matrix)
    n = bits.shape[0]
    if cap is not None and n > cap:
        raise ParameterError(
            f"triples_naive is an oracle for N <= {cap}; got N = {n} (pass cap=None to force)"
        )
    word = np.asarray(yprime, dtype=np.uint8)
    if word.shape != (bits.shape[1],):
        raise ParameterError("resolved word length does not match the code matrix")
    m = bits.shape[1]
    full = _full_mask(m)  # bit space: columns, one bit per column of y'
    user_masks = _pack_rows(bits == word[None, :], m)
    out: set[Triple] = set()
    for a in range(n - 2):
        for b in range(a + 1, n - 1):
            missing = full & ~(user_masks[a] | user_masks[b])
            ok = ((user_masks[b + 1 :] & missing) == missing).all(axis=1)
            for c in np.nonzero(ok)[0]:
                out.add((a, b, b + 1 + int(c)))
    return out


# ---------------------------------------------------------------------------
# compressed incremental index


@dataclass(eq=False)
class CompressedTriples:
    """Compressed parent-triple family after the column sweep.

    singles: packed mask of users covering y' alone.
    pair_classes: (n2, 2, W) packed masks; triples are one user per side
    plus any third user.
    triple_classes: (n3, 3, W) packed masks; one user per part.  Components
    within a class are pairwise disjoint and nonempty.
    column_stats: (pairs, triples) class counts after each processed column,
    kept so the growth of the compressed representation can be studied.
    """

    n_users: int
    singles: np.ndarray
    pair_classes: np.ndarray
    triple_classes: np.ndarray
    column_stats: list[tuple[int, int]] = field(default_factory=list)

    @property
    def class_counts(self) -> dict[str, int]:
        return {
            "singles": _popcount(self.singles),
            "pair_classes": int(self.pair_classes.shape[0]),
            "triple_classes": int(self.triple_classes.shape[0]),
        }

    def is_empty(self) -> bool:
        return (
            not self.singles.any()
            and self.pair_classes.shape[0] == 0
            and self.triple_classes.shape[0] == 0
        )


def _component_keys(classes: np.ndarray) -> np.ndarray:
    # Order key = lowest set bit; components are disjoint and nonempty, so
    # keys are distinct within a class.
    nz = classes != 0
    idx = np.argmax(nz, axis=-1)
    w0 = np.take_along_axis(classes, idx[..., None], axis=-1)[..., 0]
    tz = np.bitwise_count((w0 & (~w0 + _U64_ONE)) - _U64_ONE)
    return idx.astype(np.int64) * 64 + tz.astype(np.int64)


def _canonicalize(classes: np.ndarray) -> np.ndarray:
    """Drop classes with an empty component, sort components, deduplicate."""
    if classes.shape[0] == 0:
        return classes
    keep = (classes != 0).any(axis=2).all(axis=1)
    classes = classes[keep]
    if classes.shape[0] == 0:
        return classes
    order = np.argsort(_component_keys(classes), axis=1)
    classes = np.take_along_axis(classes, order[:, :, None], axis=1)
    k, w = classes.shape[1], classes.shape[2]
    flat = np.ascontiguousarray(classes.reshape(classes.shape[0], k * w))
    voids = flat.view(np.dtype((np.void, flat.dtype.itemsize * k * w)))
    uniq = np.unique(voids)
    return uniq.view(np.uint64).reshape(-1, k, w)


def triples_indexed(matrix, yprime) -> CompressedTriples:
    """Build the compressed parent-triple family by one sweep over columns.

    The sweep itself runs as a compiled kernel.  On top of the plain
    refinement it applies two family-preserving compressions each column:
    components are pruned of current L1 members (their triples are already
    represented by the singles rule), and classes differing in a single
    component are unioned along it (refinement distributes over unions, so
    merged boxes evolve exactly like their parts).  The expanded family is
    unchanged; only the class counts shrink.
    """
    bits = _bits_of(matrix)
    n, m = bits.shape
    cols = match_columns(bits, yprime)
    l1, pairs, triples, stats = _kernel.sweep(cols, _full_mask(n), _kernel.MERGE_MIN)
    return CompressedTriples(
        n,
        l1,
        _canonicalize(pairs),
        _canonicalize(triples),
        [(int(p), int(t)) for p, t in stats],
    )


def count_upper_bound(compressed: CompressedTriples) -> int:
    """Cheap upper bound on the expanded triple count (overlaps overcount)."""
    n = compressed.n_users
    s = _popcount(compressed.singles)
    total = math.comb(n, 3) - math.comb(max(n - s, 0), 3)
    if compressed.pair_classes.shape[0]:
        sizes = np.bitwise_count(compressed.pair_classes).sum(axis=2, dtype=np.int64)
        total += int((sizes[:, 0] * sizes[:, 1]).sum()) * max(n - 2, 0)
    if compressed.triple_classes.shape[0]:
        sizes = np.bitwise_count(compressed.triple_classes).sum(axis=2, dtype=np.int64)
        total += int((sizes[:, 0] * sizes[:, 1] * sizes[:, 2]).sum())
    return total


def _encode(rows: np.ndarray, n: int) -> np.ndarray:
    rows = np.sort(rows, axis=1).astype(np.int64)
    return (rows[:, 0] * n + rows[:, 1]) * n + rows[:, 2]


def _decode(codes: np.ndarray, n: int) -> set[Triple]:
    k = codes % n
    rest = codes // n
    j = rest % n
    i = rest // n
    return set(zip(i.tolist(), j.tolist(), k.tolist()))


def expand(
    compressed: CompressedTriples, n_users: int | None = None, limit: int | None = None
) -> set[Triple]:
    """Materialize the compressed family as sorted triples.

    Raises ExpansionOverflowError (carrying the compressed class counts)
    when the result would exceed `limit`.
    """
    n = compressed.n_users if n_users is None else int(n_users)
    if n != compressed.n_users:
        raise ParameterError("n_users disagrees with the compressed structure")
    if n**3 > 2**62:
        raise ParameterError("expansion supports at most ~2e6 users")
    cap = expansion_cap() if limit is None else int(limit)

    def overflow() -> ExpansionOverflowError:
        return ExpansionOverflowError(
            f"expanded triple family exceeds the cap of {cap}; raise the cap "
            "(C3TRACE_MAX_EXPAND or limit=) or work with the compressed form",
            class_counts=compressed.class_counts,
        )

    singles = _mask_to_users(compressed.singles, n)
    exact_single_part = math.comb(n, 3) - math.comb(max(n - singles.size, 0), 3)
    if exact_single_part > cap:
        raise overflow()

    chunks: list[np.ndarray] = []
    raw = 0

    def push(rows: np.ndarray):
        nonlocal raw, chunks
        if rows.shape[0] == 0:
            return
        chunks.append(_encode(rows, n))
        raw += rows.shape[0]
        if raw > max(2 * cap, 1 << 20):
            merged = np.unique(np.concatenate(chunks))
            if merged.size > cap:
                raise overflow()
            chunks = [merged]
            raw = merged.size

    others = np.arange(n)
    for s in singles:
        rest = others[others != s]
        iu, ju = np.triu_indices(rest.size, k=1)
        push(np.column_stack([np.full(iu.size, s), rest[iu], rest[ju]]))

    for cls in compressed.pair_classes:
        k1 = _mask_to_users(cls[0], n)
        k2 = _mask_to_users(cls[1], n)
        predicted = k1.size * k2.size * max(n - 2, 0)
        if predicted > 3 * cap + 3:  # dedup shrinks at most 3x within a class
            raise overflow()
        a, b, c = np.meshgrid(k1, k2, others, indexing="ij")
        rows = np.column_stack([a.ravel(), b.ravel(), c.ravel()])
        rows = rows[(rows[:, 2] != rows[:, 0]) & (rows[:, 2] != rows[:, 1])]
        push(rows)

    for cls in compressed.triple_classes:
        k1 = _mask_to_users(cls[0], n)
        k2 = _mask_to_users(cls[1], n)
        k3 = _mask_to_users(cls[2], n)
        if k1.size * k2.size * k3.size > 3 * cap + 3:
            raise overflow()
        a, b, c = np.meshgrid(k1, k2, k3, indexing="ij")
        push(np.column_stack([a.ravel(), b.ravel(), c.ravel()]))

    if not chunks:
        return set()
    codes = np.unique(np.concatenate(chunks))
    if codes.size > cap:
        raise overflow()
    return _decode(codes, n)


def contains_triple(compressed: CompressedTriples, triple) -> bool:
    """Membership test on the compressed form; agrees with `expand`."""
    t = tuple(sorted(int(u) for u in triple))
    if len(set(t)) != 3:
        raise ParameterError("a triple holds three distinct users")
    mask = _users_to_mask(t, compressed.n_users)
    if (compressed.singles & mask).any():
        return True
    for classes in (compressed.pair_classes, compressed.triple_classes):
        if classes.shape[0]:
            hit = ((classes & mask) != 0).any(axis=2).all(axis=1)
            if hit.any():
                return True
    return False


def has_triple_avoiding(compressed: CompressedTriples, users) -> bool:
    """Does the family contain a triple disjoint from `users`?

    Component disjointness makes the checks independent: a class yields an
    avoiding triple iff every constrained slot survives outside `users` and
    enough arbitrary users remain for the free slots.
    """
    n = compressed.n_users
    mask = _users_to_mask(users, n)
    outside = n - _popcount(mask)
    if (compressed.singles & ~mask).any() and outside - 1 >= 2:
        return True
    classes = compressed.pair_classes
    if classes.shape[0] and outside - 2 >= 1:
        if ((classes & ~mask) != 0).any(axis=2).all(axis=1).any():
            return True
    classes = compressed.triple_classes
    if classes.shape[0]:
        if ((classes & ~mask) != 0).any(axis=2).all(axis=1).any():
            return True
    return False


def find_triple_avoiding(compressed: CompressedTriples, users=()) -> Triple | None:
    """A concrete triple disjoint from `users` (lowest indices), or None."""
    n = compressed.n_users
    mask = _users_to_mask(users, n)
    s = _lowest_user(compressed.singles & ~mask)
    if s is not None:
        rest = _lowest_users_outside(mask | _users_to_mask([s], n), n, 2)
        if rest:
            return tuple(sorted([s, *rest]))
    for cls in compressed.pair_classes:
        a = _lowest_user(cls[0] & ~mask)
        b = _lowest_user(cls[1] & ~mask)
        if a is None or b is None:
            continue
        rest = _lowest_users_outside(mask | _users_to_mask([a, b], n), n, 1)
        if rest:
            return tuple(sorted([a, b, *rest]))
    for cls in compressed.triple_classes:
        picks = [_lowest_user(comp & ~mask) for comp in cls]
        if all(p is not None for p in picks):
            return tuple(sorted(picks))
    return None
