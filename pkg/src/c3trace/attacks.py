"""Collusion strategies producing attack words from pirate codewords.

An attack word is a length-m vector over {0, 1, ?}; internally '?' is the
int8 value ERASURE = -1.  All strategies copy the common bit on undetectable
columns (those where every pirate codeword agrees); they differ only on
detectable columns.  Outputs therefore satisfy the marking constraint by
construction, and `check_marking_assumption` verifies it for plug-ins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .rng import Seed

ERASURE = -1

STRATEGY_KINDS = (
    "majority",
    "minority",
    "interleave",
    "random-bit",
    "erase-detectable",
    "unbalanced",
)


@dataclass(frozen=True)
class PirateSet:
    """A coalition of 1 to 3 distinct user indices."""

    members: frozenset[int]

    def __post_init__(self):
        members = frozenset(int(i) for i in self.members)
        if not (1 <= len(members) <= 3):
            raise ParameterError("a pirate set holds 1 to 3 distinct users")
        if any(i < 0 for i in members):
            raise ParameterError("user indices are nonnegative")
        object.__setattr__(self, "members", members)

    def sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))


@dataclass(frozen=True)
class Strategy:
    """One of the shipped strategy kinds plus its parameters.

    weights: per-pirate column-pick probabilities, required by 'unbalanced'.
    erase_prob: probability of emitting '?' on a detectable column, required
    by 'erase-detectable'.
    """

    kind: str
    weights: tuple[float, ...] | None = None
    erase_prob: float | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ParameterError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "unbalanced":
            if not self.weights:
                raise ParameterError("'unbalanced' requires weights")
            w = tuple(float(x) for x in self.weights)
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ParameterError("weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ParameterError(f"weights are only meaningful for 'unbalanced'")
        if self.kind == "erase-detectable":
            if self.erase_prob is None or not (0.0 <= self.erase_prob <= 1.0):
                raise ParameterError("'erase-detectable' requires erase_prob in [0, 1]")
        elif self.erase_prob is not None:
            raise ParameterError("erase_prob is only meaningful for 'erase-detectable'")

    @property
    def erasure_free(self) -> bool:
        return self.kind != "erase-detectable" or self.erase_prob == 0.0


def _as_codeword_array(codewords) -> np.ndarray:
    rows = np.asarray(codewords, dtype=np.uint8)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ParameterError("expected a nonempty list of equal-length codewords")
    if rows.shape[0] > 3:
        raise ParameterError("at most 3 pirate codewords are supported")
    return rows


def detectable_columns(codewords) -> tuple[np.ndarray, np.ndarray]:
    """Partition column indices into (undetectable, detectable).

    A column is undetectable when all given codewords agree there; with a
    single codeword every column is undetectable.
    """
    rows = _as_codeword_array(codewords)
    agree = (rows == rows[0]).all(axis=0)
    cols = np.arange(rows.shape[1])
    return cols[agree], cols[~agree]


def _majority_bits(rows: np.ndarray, det: np.ndarray, rng) -> np.ndarray:
    # 3 pirates: the bit held by >= 2; 2 pirates: detectable means a tie,
    # broken by a fair coin (one draw per detectable column).
    if rows.shape[0] == 3:
        return (rows[:, det].sum(axis=0) >= 2).astype(np.int8)
    return (rng.random(det.size) < 0.5).astype(np.int8)


def apply_strategy(strategy: Strategy, codewords, seed: Seed) -> np.ndarray:
    """Produce an attack word; deterministic given (strategy, codewords, seed).

    Undetectable columns always copy the common bit.  Detectable columns are
    filled per strategy kind; random draws are consumed in a fixed order
    (one vector per decision, sized by the detectable column count).
    """
    rows = _as_codeword_array(codewords)
    k, m = rows.shape
    rng = seed.generator()
    undet, det = detectable_columns(rows)
    y = np.zeros(m, dtype=np.int8)
    y[undet] = rows[0, undet]
    if det.size == 0:
        return y

    kind = strategy.kind
    if kind == "majority":
        y[det] = _majority_bits(rows, det, rng)
    elif kind == "minority":
        if k == 3:
            # detectable columns split 2-1; the minority bit is 1 iff exactly one pirate holds 1
            y[det] = (rows[:, det].sum(axis=0) == 1).astype(np.int8)
        elif k == 2:
            y[det] = (rng.random(det.size) < 0.5).astype(np.int8)
        # k == 1: no detectable columns exist, handled above
    elif kind == "interleave":
        pick = rng.integers(0, k, size=det.size)
        y[det] = rows[pick, det]
    elif kind == "random-bit":
        y[det] = (rng.random(det.size) < 0.5).astype(np.int8)
    elif kind == "erase-detectable":
        erase = rng.random(det.size) < strategy.erase_prob
        filler = _majority_bits(rows, det, rng)
        y[det] = np.where(erase, np.int8(ERASURE), filler)
    elif kind == "unbalanced":
        if len(strategy.weights) != k:
            raise ParameterError(
                f"'unbalanced' weights have length {len(strategy.weights)}, need {k}"
            )
        pick = rng.choice(k, size=det.size, p=np.asarray(strategy.weights))
        y[det] = rows[pick, det]
    return y


def check_marking_assumption(codewords, y) -> np.ndarray:
    """Return the indices of violated columns (empty array means OK).

    A violation is an undetectable column whose attack symbol differs from
    the pirates' common bit; '?' there is a violation too, since the common
    bit must be copied verbatim.
    """
    rows = _as_codeword_array(codewords)
    word = np.asarray(y, dtype=np.int8)
    if word.shape != (rows.shape[1],):
        raise ParameterError("attack word length does not match the codewords")
    undet, _ = detectable_columns(rows)
    bad = word[undet] != rows[0, undet].astype(np.int8)
    return undet[bad]


WORD_CHARS = {0: "0", 1: "1", ERASURE: "?"}
CHAR_WORDS = {"0": 0, "1": 1, "?": ERASURE}


def write_word_file(path, y) -> None:
    word = np.asarray(y, dtype=np.int8)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("".join(WORD_CHARS[int(v)] for v in word))
        fh.write("\n")


def read_word_file(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        line = fh.readline().strip()
    if set(line) - set(CHAR_WORDS):
        raise ParameterError(f"{path}: attack word must contain only 0/1/?")
    return np.array([CHAR_WORDS[c] for c in line], dtype=np.int8)
