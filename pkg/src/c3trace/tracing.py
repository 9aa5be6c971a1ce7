"""The tracing algorithm: erasure resolution, scoring, threshold, parent search.

Tracing runs in two phases.  The score phase resolves '?' symbols, scores
every user by weighted bit agreement with the resolved word y', and accuses
everyone at or above a threshold Z calibrated so that an innocent user
crosses it with probability at most eps0/N.  If nobody crosses, the parent
phase enumerates candidate coalitions T(y') (triples whose codewords could
have produced y'), keeps the triples T' that intersect every candidate, and
walks a fixed decision ladder over T' and its hitting pairs P.

Score bookkeeping is exact: a score is the integer pair (count_h, count_l)
of matches on high/low-probability columns, with real value
count_h*log(1/p) + count_l*log(1/(1-p)).  At p = 1/2 all comparisons reduce
to integers (normalized score = m minus Hamming distance), so there are no
float ties; for general p, scores and thresholds are evaluated through one
shared expression so that equal lattice points compare equal bit-for-bit,
and a score below Z never accuses.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from typing import Iterable, NamedTuple

import numpy as np
from scipy.stats import binom

from . import envelope_index as ei
from .attacks import ERASURE
from .codegen import CodeMatrix, CodeParams, StateInfo, validate_dimensions
from .envelope_index import Triple
from .errors import ExpansionOverflowError, ParameterError
from .rng import Seed

THRESHOLD_MODES = ("exact", "z0")
EXACT_THRESHOLD_MAX_COLUMNS = 10_000


@dataclass(frozen=True)
class ColumnClasses:
    """Column split by the occurrence probability of the resolved bit.

    Column j is in the high class A_H when (p_j, y'_j) is (p, 1) or (1-p, 0),
    i.e. the observed bit had probability p >= 1/2; at p = 1/2 both patterns
    coincide and every column counts as high.
    """

    bias: float
    is_high_match: np.ndarray

    @property
    def a_h(self) -> int:
        return int(self.is_high_match.sum())

    @property
    def a_l(self) -> int:
        return int(self.is_high_match.size - self.is_high_match.sum())


@dataclass(frozen=True)
class Score:
    """Integer match counts plus the real score value they induce."""

    count_h: int
    count_l: int
    value: float

    @property
    def normalized(self) -> int:
        """count_h + count_l; equals the score divided by log 2 when p = 1/2."""
        return self.count_h + self.count_l


@dataclass(frozen=True)
class PairSet:
    pairs: frozenset[tuple[int, int]]
    multiplicity: dict[int, int] = field(compare=False)


class ResolveOutcome(NamedTuple):
    accused: frozenset[int]
    halted_at: int
    diagnostics: dict


@dataclass(frozen=True)
class TraceResult:
    accused: frozenset[int]
    halted_at: int
    diagnostics: dict


def resolve_erasures(y, state: StateInfo, seed: Seed) -> np.ndarray:
    """Replace each '?' with 1 w.p. p_j (else 0), independently per column."""
    word = np.asarray(y, dtype=np.int8)
    if word.shape != (state.code_length,):
        raise ParameterError("attack word length does not match the state vector")
    erased = word == ERASURE
    out = np.where(erased, 0, word).astype(np.uint8)
    if erased.any():
        draws = seed.generator().random(int(erased.sum()))
        out[erased] = (draws < state.column_bias[erased]).astype(np.uint8)
    return out


def classify_columns(yprime, state: StateInfo) -> ColumnClasses:
    word = np.asarray(yprime, dtype=np.uint8)
    if word.shape != (state.code_length,):
        raise ParameterError("resolved word length does not match the state vector")
    p = state.bias
    bias = state.column_bias
    is_h = ((bias == p) & (word == 1)) | ((bias == 1.0 - p) & (word == 0))
    return ColumnClasses(p, is_h)


def score_value(count_h: int, count_l: int, bias: float) -> float:
    # Single shared expression for user scores and lattice thresholds, so
    # identical integer pairs always compare equal in float arithmetic.
    return count_h * math.log(1.0 / bias) + count_l * math.log(1.0 / (1.0 - bias))


def score(codeword, yprime, classes: ColumnClasses) -> Score:
    """Score one user: matches on A_H weigh log(1/p), on A_L weigh log(1/(1-p))."""
    w = np.asarray(codeword, dtype=np.uint8)
    word = np.asarray(yprime, dtype=np.uint8)
    if w.shape != word.shape:
        raise ParameterError("codeword and resolved word lengths differ")
    matches = w == word
    ch = int((matches & classes.is_high_match).sum())
    cl = int((matches & ~classes.is_high_match).sum())
    return Score(ch, cl, score_value(ch, cl, classes.bias))


def score_counts(matrix: CodeMatrix, yprime, classes: ColumnClasses):
    """Vectorized (count_h, count_l) arrays over all users."""
    matches = matrix.bits == np.asarray(yprime, dtype=np.uint8)[None, :]
    ch = (matches & classes.is_high_match[None, :]).sum(axis=1)
    cl = (matches & ~classes.is_high_match[None, :]).sum(axis=1)
    return ch, cl


# ---------------------------------------------------------------------------
# thresholds


def threshold_z0(classes: ColumnClasses, params: CodeParams) -> float:
    """Closed-form threshold: mean innocent score plus a one-sided tail margin."""
    p = params.bias
    a_h, a_l = classes.a_h, classes.a_l
    wh, wl = math.log(1.0 / p), math.log(1.0 / (1.0 - p))
    mean = a_h * p * wh + a_l * (1.0 - p) * wl
    margin = math.sqrt(
        0.5 * (wh * wh * a_h + wl * wl * a_l) * math.log(params.n_users / params.eps0)
    )
    return mean + margin


@lru_cache(maxsize=65536)
def _binomial_threshold_int(m: int, n_users: int, eps0: float) -> int:
    """Smallest integer s with Pr[Binomial(m, 1/2) >= s] <= eps0/n (s = m+1 -> 0)."""
    t = eps0 / n_users
    lo, hi = 0, m + 1
    while lo < hi:
        mid = (lo + hi) // 2
        tail = float(binom.sf(mid - 1, m, 0.5)) if mid <= m else 0.0
        if tail <= t:
            hi = mid
        else:
            lo = mid + 1
    return lo


def threshold_exact(
    classes: ColumnClasses,
    params: CodeParams,
    max_columns: int = EXACT_THRESHOLD_MAX_COLUMNS,
) -> float:
    """Minimal score-lattice value whose innocent tail mass is <= eps0/N.

    The innocent match counts are Binomial(a_H, p) and Binomial(a_L, 1-p);
    the tail mass at Z sums the joint pmf over lattice points with value
    >= Z, accumulated in the log domain.  If even the top lattice point
    carries too much mass, one lattice step above it is returned (empty
    tail).  The result never exceeds threshold_z0 on the same inputs.
    """
    m = classes.a_h + classes.a_l
    if m > max_columns:
        raise ParameterError(
            f"exact threshold supports at most {max_columns} columns; got {m}"
        )
    p = params.bias
    if p == 0.5:
        return _binomial_threshold_int(m, params.n_users, params.eps0) * math.log(2.0)

    a_h, a_l = classes.a_h, classes.a_l
    wh, wl = math.log(1.0 / p), math.log(1.0 / (1.0 - p))
    kh = np.arange(a_h + 1)
    kl = np.arange(a_l + 1)
    vals = (kh[:, None] * wh + kl[None, :] * wl).ravel()
    logmass = (
        binom.logpmf(kh, a_h, p)[:, None] + binom.logpmf(kl, a_l, 1.0 - p)[None, :]
    ).ravel()
    order = np.argsort(vals, kind="stable")
    vals, logmass = vals[order], logmass[order]
    suffix = np.logaddexp.accumulate(logmass[::-1])[::-1]
    log_t = math.log(params.eps0) - math.log(params.n_users)
    first_of_run = np.ones(vals.size, dtype=bool)
    first_of_run[1:] = vals[1:] > vals[:-1]
    ok = first_of_run & (suffix <= log_t)
    hits = np.nonzero(ok)[0]
    if hits.size:
        return float(vals[hits[0]])
    return float(vals[-1]) + wh


def threshold_tail(z: float, classes: ColumnClasses, params: CodeParams) -> float:
    """Innocent-score tail mass Pr[S >= z]; the quantity the threshold bounds."""
    p = params.bias
    a_h, a_l = classes.a_h, classes.a_l
    wh, wl = math.log(1.0 / p), math.log(1.0 / (1.0 - p))
    kh = np.arange(a_h + 1)
    kl = np.arange(a_l + 1)
    vals = kh[:, None] * wh + kl[None, :] * wl
    logmass = binom.logpmf(kh, a_h, p)[:, None] + binom.logpmf(kl, a_l, 1.0 - p)[None, :]
    sel = logmass[vals >= z]
    if sel.size == 0:
        return 0.0
    peak = sel.max()
    if peak == -math.inf:
        return 0.0
    return float(math.exp(peak + math.log(np.exp(sel - peak).sum())))


# ---------------------------------------------------------------------------
# parent-triple resolution (the decision ladder)


def _normalize_triples(triples: Iterable) -> set[Triple]:
    out = set()
    for t in triples:
        tt = tuple(sorted(int(u) for u in t))
        if len(set(tt)) != 3:
            raise ParameterError(f"not a set of three distinct users: {t!r}")
        out.add(tt)
    return out


def _hit_counts(triples: set[Triple]):
    cnt: Counter = Counter()
    pair_cnt: Counter = Counter()
    for a, b, c in triples:
        cnt[a] += 1
        cnt[b] += 1
        cnt[c] += 1
        pair_cnt[(a, b)] += 1
        pair_cnt[(a, c)] += 1
        pair_cnt[(b, c)] += 1
    return cnt, pair_cnt


def compute_t_prime(triples: Iterable) -> set[Triple]:
    """Triples of the family that intersect every member of the family.

    Uses inclusion-exclusion over per-user and per-pair containment counts,
    so the cost is linear in the family size.
    """
    ts = _normalize_triples(triples)
    total = len(ts)
    cnt, pair_cnt = _hit_counts(ts)
    out = set()
    for t in ts:
        a, b, c = t
        hits = (
            cnt[a] + cnt[b] + cnt[c]
            - pair_cnt[(a, b)] - pair_cnt[(a, c)] - pair_cnt[(b, c)]
            + 1
        )
        if hits == total:
            out.add(t)
    return out


def compute_pair_set(t_prime: Iterable) -> PairSet:
    """Pairs of users (within the support of T') intersecting every T in T'.

    After the common-member step has failed, no single user hits every
    triple, so a qualifying pair with an element outside the support is
    impossible; restricting candidates to supported users is exact there
    and matches the worked small cases.
    """
    ts = _normalize_triples(t_prime)
    if not ts:
        raise ParameterError("compute_pair_set requires a nonempty family")
    total = len(ts)
    cnt, pair_cnt = _hit_counts(ts)
    base = min(ts)
    support = {u for t in ts for u in t}
    pairs = set()
    for u in base:
        for v in support:
            if v == u:
                continue
            pq = (u, v) if u < v else (v, u)
            if cnt[pq[0]] + cnt[pq[1]] - pair_cnt[pq] == total:
                pairs.add(pq)
    multiplicity = Counter(u for pq in pairs for u in pq)
    return PairSet(frozenset(pairs), dict(multiplicity))


def _partners_of(pairs: frozenset[tuple[int, int]], targets: set[int]) -> frozenset[int]:
    out = set()
    for a, b in pairs:
        if b in targets:
            out.add(a)
        if a in targets:
            out.add(b)
    return frozenset(out)


def _resolve_from_t_prime(t_prime: set[Triple], diagnostics: dict) -> ResolveOutcome:
    """Steps 6-15 of the ladder, given T' explicitly."""
    diagnostics["n_t_prime"] = len(t_prime)
    cnt = Counter(u for t in t_prime for u in t)
    common = frozenset(u for u, k in cnt.items() if k == len(t_prime))
    if common:
        return ResolveOutcome(common, 6, diagnostics)

    ps = compute_pair_set(t_prime)
    pairs, mult = ps.pairs, ps.multiplicity
    diagnostics["n_pairs"] = len(pairs)
    diagnostics["multiplicity_histogram"] = dict(Counter(mult.values()))

    p1 = {u for u, k in mult.items() if k == 1}
    if p1:
        return ResolveOutcome(_partners_of(pairs, p1), 8, diagnostics)
    if len(pairs) == 7:
        p2 = {u for u, k in mult.items() if k == 2}
        return ResolveOutcome(_partners_of(pairs, p2), 9, diagnostics)
    if len(pairs) == 6:
        return ResolveOutcome(frozenset(u for u, k in mult.items() if k == 3), 10, diagnostics)
    support = sorted({u for pq in pairs for u in pq})
    if len(pairs) == 5:
        triangles = {
            t
            for t in combinations(support, 3)
            if t in t_prime
            and (t[0], t[1]) in pairs and (t[0], t[2]) in pairs and (t[1], t[2]) in pairs
        }
        if triangles:
            p2 = {u for u, k in mult.items() if k == 2}
            covered = {u for t in triangles for u in t}
            return ResolveOutcome(frozenset(p2 & covered), 11, diagnostics)
        accused = frozenset(
            u
            for u in support
            if any(
                (min(u, v), max(u, v)) not in pairs for v in support if v != u
            )
        )
        return ResolveOutcome(accused, 12, diagnostics)
    if len(pairs) == 4:
        inner = [t for t in combinations(support, 3) if t in t_prime]
        diagnostics["step13_vacuous"] = not inner
        accused = frozenset(u for u in support if all(u in t for t in inner))
        return ResolveOutcome(accused, 13, diagnostics)
    if len(pairs) == 3:
        return ResolveOutcome(frozenset(support), 14, diagnostics)
    return ResolveOutcome(frozenset(), 15, diagnostics)


def resolve_from_triples(triples: Iterable) -> ResolveOutcome:
    """Run the decision ladder on a parent-triple family T(y')."""
    ts = _normalize_triples(triples)
    diagnostics = {"n_parent_triples": len(ts)}
    t_prime = compute_t_prime(ts)
    if not t_prime:
        diagnostics["n_t_prime"] = 0
        return ResolveOutcome(frozenset(), 5, diagnostics)
    return _resolve_from_t_prime(t_prime, diagnostics)


def _resolve_compressed(compressed: ei.CompressedTriples, diagnostics: dict) -> ResolveOutcome:
    """Ladder entry for families too large to materialize.

    T' members must intersect every member of a pairwise-disjoint subfamily,
    so a greedy disjoint family of size 4 forces T' to be empty, sizes 2-3
    shrink the candidate space enough to verify each candidate with
    compressed queries, and size 1 (no two disjoint triples) makes T' the
    whole family, where only the common-member step can apply.
    """
    n = compressed.n_users
    diagnostics["n_parent_triples"] = None
    if compressed.is_empty():
        diagnostics["n_t_prime"] = 0
        return ResolveOutcome(frozenset(), 5, diagnostics)

    family: list[Triple] = []
    avoid: set[int] = set()
    while len(family) < 4:
        t = ei.find_triple_avoiding(compressed, avoid)
        if t is None:
            break
        family.append(t)
        avoid |= set(t)

    if len(family) >= 4:
        diagnostics["n_t_prime"] = 0
        return ResolveOutcome(frozenset(), 5, diagnostics)

    if len(family) >= 2:
        if len(family) == 3:
            candidates = {tuple(sorted(t)) for t in product(*family)}
        else:
            t0, t1 = family
            candidates = {
                tuple(sorted((a, b, x)))
                for a in t0
                for b in t1
                for x in range(n)
                if x != a and x != b
            }
        t_prime = {
            c
            for c in candidates
            if ei.contains_triple(compressed, c)
            and not ei.has_triple_avoiding(compressed, c)
        }
        if not t_prime:
            diagnostics["n_t_prime"] = 0
            return ResolveOutcome(frozenset(), 5, diagnostics)
        return _resolve_from_t_prime(t_prime, diagnostics)

    # No two disjoint triples: the family is pairwise intersecting, so T'
    # is the whole family and the common members are exactly the users no
    # triple avoids.
    common = frozenset(
        u for u in range(n) if not ei.has_triple_avoiding(compressed, [u])
    )
    if common:
        diagnostics["n_t_prime"] = None
        return ResolveOutcome(common, 6, diagnostics)
    raise ExpansionOverflowError(
        "parent family is pairwise intersecting with no common member and too "
        "large to materialize; raise the expansion cap",
        class_counts=compressed.class_counts,
    )


# ---------------------------------------------------------------------------
# the full tracer


def trace(
    y,
    matrix: CodeMatrix,
    state: StateInfo,
    params: CodeParams,
    seed: Seed,
    threshold_mode: str | None = None,
    expand_limit: int | None = None,
) -> TraceResult:
    """Trace an attack word to a set of accused users.

    threshold_mode None picks 'exact' at p = 1/2 and 'z0' otherwise.
    Halting step 4 is the score phase; steps 5-15 are the parent phase.
    """
    report = validate_dimensions(matrix, state, params)
    if not report.ok:
        raise ParameterError("; ".join(report.problems))
    word = np.asarray(y, dtype=np.int8)
    if word.shape != (params.code_length,):
        raise ParameterError("attack word length does not match params.code_length")
    if threshold_mode is None:
        threshold_mode = "exact" if params.bias == 0.5 else "z0"
    if threshold_mode not in THRESHOLD_MODES:
        raise ParameterError(f"threshold_mode must be one of {THRESHOLD_MODES}")

    yprime = resolve_erasures(word, state, seed)
    classes = classify_columns(yprime, state)
    ch, cl = score_counts(matrix, yprime, classes)

    diagnostics: dict = {"threshold_mode": threshold_mode}
    if params.bias == 0.5:
        snorm = ch + cl
        if threshold_mode == "exact":
            s_star = _binomial_threshold_int(
                params.code_length, params.n_users, params.eps0
            )
            above = snorm >= s_star
            z_value = s_star * math.log(2.0)
        else:
            z_value = threshold_z0(classes, params)
            above = snorm >= z_value / math.log(2.0)
    else:
        values = ch * math.log(1.0 / params.bias) + cl * math.log(
            1.0 / (1.0 - params.bias)
        )
        if threshold_mode == "exact":
            z_value = threshold_exact(classes, params)
        else:
            z_value = threshold_z0(classes, params)
        above = values >= z_value
    diagnostics["threshold"] = float(z_value)

    if above.any():
        accused = frozenset(int(i) for i in np.nonzero(above)[0])
        return TraceResult(accused, 4, diagnostics)

    compressed = ei.triples_indexed(matrix, yprime)
    diagnostics["index_classes"] = compressed.class_counts
    diagnostics["index_max_live_classes"] = max(
        (p + t for p, t in compressed.column_stats), default=0
    )
    limit = ei.expansion_cap() if expand_limit is None else int(expand_limit)
    if ei.count_upper_bound(compressed) <= limit:
        outcome = resolve_from_triples(ei.expand(compressed, limit=limit))
    else:
        outcome = _resolve_compressed(compressed, {})
    diagnostics.update(outcome.diagnostics)
    return TraceResult(outcome.accused, outcome.halted_at, diagnostics)
