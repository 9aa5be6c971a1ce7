"""Provable error-probability bounds and the minimal code-length solver.

The three-pirate error probability is bounded by a sum of four terms: the
score-phase budget eps0 plus three exponentially decaying terms counting,
respectively, all-innocent parent triples, pairs of parent triples pinned
on a shared innocent user, and the event that one innocent user completes
a parent triple with every pair of pirates while all pirate scores stay
below the threshold.  The base constants f1, f2, f3 depend only on the
bias p; at p = 1/2 they specialize to 7/8, (10+sqrt 2)/16, and 7*sqrt(2)/16,
and the same bound then covers one and two pirates provided the code length
meets a mild lower bound (condition `min_code_length_condition`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .codegen import CodeParams
from .errors import InfeasibleError, ParameterError

SEARCH_CEILING = 10_000_000
_WINDOW = 4


@dataclass(frozen=True)
class BoundBreakdown:
    eps0_term: float
    typeII_term: float
    typeIII_term: float
    typeIV_term: float
    total: float
    condition_m_ok: bool

    def as_dict(self) -> dict:
        return {
            "eps0_term": self.eps0_term,
            "typeII_term": self.typeII_term,
            "typeIII_term": self.typeIII_term,
            "typeIV_term": self.typeIV_term,
            "total": self.total,
            "condition_m_ok": self.condition_m_ok,
        }


def f_polys(p: float) -> tuple[float, float, float]:
    """Base constants of the three decaying bound terms, as functions of p."""
    if not (0.5 <= p < 1.0):
        raise ParameterError("f polynomials are defined for 1/2 <= p < 1")
    q = 1.0 - p
    f1 = 1 - 3 * p**2 + 10 * p**3 - 15 * p**4 + 12 * p**5 - 4 * p**6
    f2 = p**2 * q**2 * (math.sqrt(p) + math.sqrt(q)) + 1 - p - p**2 + 4 * p**3 - 2 * p**4
    f3 = p ** (4 - 3 * p) * (p**2 - 3 * p + 3) + q ** (3 * p + 1) * (p**2 + p + 1)
    return f1, f2, f3


def min_code_length_condition(n: int, eps0: float) -> float:
    """Real lower bound on m under which the one/two-pirate cases are covered."""
    ell = math.log(n / eps0)
    return 8 * ell * (1 + 1 / (16 * ell)) ** 2


def _exp_or_inf(log_value: float) -> float:
    try:
        return math.exp(log_value)
    except OverflowError:
        return math.inf


def theorem1_bound(params: CodeParams) -> BoundBreakdown:
    """Four-term bound at arbitrary bias p; terms evaluated in the log domain."""
    n, m, p, eps0 = params.n_users, params.code_length, params.bias, params.eps0
    f1, f2, f3 = f_polys(p)
    c2 = math.comb(max(n - 3, 0), 3)
    c3 = 3 * max(n - 3, 0) * max(n - 4, 0)
    t2 = _exp_or_inf(math.log(c2) + m * math.log(f1)) if c2 else 0.0
    t3 = _exp_or_inf(math.log(c3) + m * math.log(f2)) if c3 else 0.0
    if n > 3:
        margin = 3 * math.sqrt((m / 2) * math.log(n / eps0))
        t4 = _exp_or_inf(
            math.log(n - 3) - margin * math.log(1.0 - p) + m * math.log(f3)
        )
    else:
        t4 = 0.0
    total = math.fsum((eps0, t2, t3, t4))
    return BoundBreakdown(
        eps0, t2, t3, t4, total, m >= min_code_length_condition(n, eps0)
    )


def theorem2_bound(n: int, m: int, eps0: float) -> BoundBreakdown:
    """The p = 1/2 specialization, valid against up to three pirates."""
    if n < 4 or m < 1 or not (0.0 < eps0 < 1.0):
        raise ParameterError("need n >= 4, m >= 1, eps0 in (0, 1)")
    return theorem1_bound(CodeParams(n, m, 0.5, eps0))


def _feasible(n: int, m: int, eps: float, eps0: float) -> bool:
    b = theorem2_bound(n, m, eps0)
    return b.condition_m_ok and b.total <= eps


def min_length(n: int, eps: float, eps0: float, ceiling: int = SEARCH_CEILING) -> int:
    """Smallest m meeting the length condition with bound total <= eps.

    Exponential-then-binary search finds a feasible point; because the
    bound is only eventually decreasing, a short downward walk plus a small
    window scan then pins the true minimum.
    """
    if not (0.0 < eps0 < eps < 1.0):
        raise ParameterError("need 0 < eps0 < eps < 1")
    if n < 4:
        raise ParameterError("need n >= 4")
    m_lo = math.ceil(min_code_length_condition(n, eps0))
    if m_lo > ceiling:
        raise InfeasibleError(f"length condition alone needs m >= {m_lo} > ceiling {ceiling}")

    if _feasible(n, m_lo, eps, eps0):
        cand = m_lo
    else:
        lo, hi = m_lo, max(2 * m_lo, m_lo + 1)
        while not _feasible(n, hi, eps, eps0):
            lo = hi
            hi *= 2
            if hi > ceiling:
                raise InfeasibleError(
                    f"no feasible code length up to the ceiling of {ceiling} "
                    f"for n={n}, eps={eps}, eps0={eps0}"
                )
        while lo + 1 < hi:  # invariant: lo infeasible, hi feasible
            mid = (lo + hi) // 2
            if _feasible(n, mid, eps, eps0):
                hi = mid
            else:
                lo = mid
        cand = hi

    while cand - 1 >= m_lo and _feasible(n, cand - 1, eps, eps0):
        cand -= 1
    for m in range(max(m_lo, cand - _WINDOW), cand):
        if _feasible(n, m, eps, eps0):
            return m
    return cand


@dataclass(frozen=True)
class ScanResult:
    rows: tuple[tuple[float, int | None], ...]
    best_fraction: float
    best_length: int


def scan_eps0(n: int, eps: float, grid) -> ScanResult:
    """min_length over a grid of eps0 = fraction * eps; reports the argmin."""
    rows = []
    for frac in grid:
        if not (0.0 < frac < 1.0):
            raise ParameterError("eps0 fractions must lie in (0, 1)")
        try:
            rows.append((float(frac), min_length(n, eps, frac * eps)))
        except InfeasibleError:
            rows.append((float(frac), None))
    feasible = [(m, frac) for frac, m in rows if m is not None]
    if not feasible:
        raise InfeasibleError(f"no grid point is feasible for n={n}, eps={eps}")
    best_m, best_frac = min(feasible)
    return ScanResult(tuple(rows), best_frac, best_m)


# Published comparison points: (table, n, eps, eps0 fraction, expected m).
TABLE_POINTS = (
    ("table1", 128, 0.14e-6, 0.5, 282),
    ("table1", 256, 0.15e-13, 0.7, 502),
    ("table1", 512, 0.19e-27, 0.7, 934),
    ("table2", 300, 1e-11, 0.9, 420),
    ("table2", 10**9, 1e-6, 0.01, 556),
    ("table2", 10**6, 1e-3, 0.01, 349),
)


def table_rows() -> list[dict]:
    """Recompute the published comparison tables from the bound."""
    out = []
    for table, n, eps, frac, expected in TABLE_POINTS:
        m = min_length(n, eps, frac * eps)
        out.append(
            {
                "table": table,
                "n_users": n,
                "eps": eps,
                "eps0_fraction": frac,
                "code_length": m,
                "expected": expected,
            }
        )
    return out
