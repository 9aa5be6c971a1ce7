"""Code parameters, codeword generation, and the code/state file formats.

A code is an N x m binary matrix W: row i is the codeword of user i (users
are indexed 0..N-1 throughout).  Generation draws a per-column bias p_j
uniformly from {p, 1-p}, then sets each bit to 1 independently with
probability p_j.  The bias vector (p_j) is the tracer's secret state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .rng import Seed

CODE_MAGIC = "c3code"


@dataclass(frozen=True)
class CodeParams:
    """Experiment contract: user count N, code length m, bias p, and eps0.

    eps0 is the per-word budget for the score-threshold phase; the tracing
    threshold is calibrated so an innocent user crosses it with probability
    at most eps0 / N.
    """

    n_users: int
    code_length: int
    bias: float = 0.5
    eps0: float = 0.01

    def __post_init__(self):
        if int(self.n_users) != self.n_users or self.n_users < 4:
            raise ParameterError("n_users must be an integer >= 4")
        if int(self.code_length) != self.code_length or self.code_length < 1:
            raise ParameterError("code_length must be a positive integer")
        if not (0.5 <= self.bias < 1.0):
            raise ParameterError("bias must satisfy 1/2 <= p < 1")
        if not (0.0 < self.eps0 < 1.0):
            raise ParameterError("eps0 must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """N x m matrix of codeword bits, dtype uint8, values in {0, 1}."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ParameterError("code matrix must be two-dimensional")
        if bits.size and bits.max() > 1:
            raise ParameterError("code matrix entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)
        bits.setflags(write=False)

    @property
    def n_users(self) -> int:
        return self.bits.shape[0]

    @property
    def code_length(self) -> int:
        return self.bits.shape[1]

    def codeword(self, user: int) -> np.ndarray:
        return self.bits[user]


@dataclass(frozen=True, eq=False)
class StateInfo:
    """Per-column bias vector: column j has Pr[bit = 1] = p if is_high[j] else 1-p."""

    bias: float
    is_high: np.ndarray

    def __post_init__(self):
        flags = np.ascontiguousarray(self.is_high, dtype=bool)
        object.__setattr__(self, "is_high", flags)
        flags.setflags(write=False)

    @property
    def code_length(self) -> int:
        return self.is_high.shape[0]

    @property
    def column_bias(self) -> np.ndarray:
        return np.where(self.is_high, self.bias, 1.0 - self.bias)


@dataclass(frozen=True)
class DimensionReport:
    ok: bool
    problems: tuple[str, ...] = field(default=())


def generate_code(params: CodeParams, seed: Seed) -> tuple[CodeMatrix, StateInfo]:
    """Sample (W, st) for the given parameters.

    Draw order is fixed (m bias flips, then N*m bit uniforms) so the output
    is reproducible bit-for-bit from (params, seed).
    """
    rng = seed.generator()
    n, m, p = params.n_users, params.code_length, params.bias
    is_high = rng.random(m) < 0.5
    column_bias = np.where(is_high, p, 1.0 - p)
    bits = (rng.random((n, m)) < column_bias[None, :]).astype(np.uint8)
    return CodeMatrix(bits), StateInfo(p, is_high)


def validate_dimensions(
    matrix: CodeMatrix, state: StateInfo, params: CodeParams
) -> DimensionReport:
    """Check that matrix, state, and params agree on N, m, and bias values."""
    problems = []
    if matrix.n_users != params.n_users:
        problems.append(
            f"matrix has {matrix.n_users} rows, params.n_users = {params.n_users}"
        )
    if matrix.code_length != params.code_length:
        problems.append(
            f"matrix has {matrix.code_length} columns, params.code_length = {params.code_length}"
        )
    if state.code_length != params.code_length:
        problems.append(
            f"column_bias has length {state.code_length}, params.code_length = {params.code_length}"
        )
    if state.bias != params.bias:
        problems.append(f"state bias {state.bias!r} != params bias {params.bias!r}")
    expected = {params.bias, 1.0 - params.bias}
    bad = [float(v) for v in np.unique(state.column_bias) if float(v) not in expected]
    if bad:
        problems.append(f"column_bias entries {bad} not in {{p, 1-p}}")
    return DimensionReport(ok=not problems, problems=tuple(problems))


def write_code_file(path, matrix: CodeMatrix, bias: float) -> None:
    """Write the `c3code N=<n> M=<m> P=<p>` header plus one 0/1 row per user."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{CODE_MAGIC} N={matrix.n_users} M={matrix.code_length} P={bias!r}\n")
        for row in matrix.bits:
            fh.write("".join("1" if b else "0" for b in row))
            fh.write("\n")


def read_code_file(path) -> tuple[CodeMatrix, float]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != CODE_MAGIC:
            raise ParameterError(f"{path}: missing '{CODE_MAGIC} N=.. M=.. P=..' header")
        try:
            fields = dict(item.split("=", 1) for item in header[1:])
            n, m, p = int(fields["N"]), int(fields["M"]), float(fields["P"])
        except (KeyError, ValueError) as exc:
            raise ParameterError(f"{path}: malformed header: {exc}") from exc
        rows = np.zeros((n, m), dtype=np.uint8)
        for i in range(n):
            line = fh.readline().strip()
            if len(line) != m or set(line) - {"0", "1"}:
                raise ParameterError(f"{path}: row {i} is not {m} characters of 0/1")
            rows[i] = np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0")
    return CodeMatrix(rows), p


def write_state_file(path, state: StateInfo) -> None:
    """One line of 'H'/'L' per column; 'H' means the column bias equals p."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("".join("H" if h else "L" for h in state.is_high))
        fh.write("\n")


def read_state_file(path, bias: float) -> StateInfo:
    with open(path, "r", encoding="ascii") as fh:
        line = fh.readline().strip()
    if set(line) - {"H", "L"}:
        raise ParameterError(f"{path}: state line must contain only 'H'/'L'")
    return StateInfo(bias, np.frombuffer(line.encode("ascii"), dtype=np.uint8) == ord("H"))
