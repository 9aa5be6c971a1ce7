"""Monte Carlo harness for the pirate tracing game.

A trial generates a fresh code, registers a uniform random coalition,
applies the attack strategy, validates the marking constraint, traces, and
classifies the outcome.  Every random draw in trial i derives from
(master_seed, stream, i), so aggregate results are bit-identical for any
worker count: parallelism only distributes trial indices.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import beta

from .attacks import ERASURE, Strategy, apply_strategy, check_marking_assumption, detectable_columns
from .codegen import CodeMatrix, CodeParams, StateInfo, generate_code
from .envelope_index import contains_triple, triples_indexed
from .errors import MarkingAssumptionError, ParameterError
from .rng import Seed
from .tracing import THRESHOLD_MODES, classify_columns, score, trace

StrategyLike = Strategy | Callable[[np.ndarray, Seed], np.ndarray]


@dataclass(frozen=True)
class ExperimentConfig:
    params: CodeParams
    n_pirates: int
    strategy: StrategyLike
    trials: int
    master_seed: int
    threshold_mode: str | None = None

    def __post_init__(self):
        if not (1 <= self.n_pirates <= 3):
            raise ParameterError("n_pirates must be 1, 2, or 3")
        if self.n_pirates > self.params.n_users:
            raise ParameterError("more pirates than users")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.threshold_mode is not None and self.threshold_mode not in THRESHOLD_MODES:
            raise ParameterError(f"threshold_mode must be one of {THRESHOLD_MODES}")


@dataclass(frozen=True)
class TrialOutcome:
    """Classification of one game: the provider wins iff kind == 'correct'.

    false_negative: no pirate accused (including nobody accused).
    false_positive: some innocent user accused.  Both can hold at once
    (nonempty accusation disjoint from the coalition); such a trial counts
    once as an error, carries both flags, and reports kind
    'false_positive'.
    """

    kind: str
    accused: frozenset[int]
    pirates: frozenset[int]
    halted_at: int
    false_negative: bool
    false_positive: bool


@dataclass(frozen=True)
class ErrorStats:
    trials: int
    errors: int
    fn_count: int
    fp_count: int
    rate: float
    ci_upper_95: float
    per_step_histogram: dict[int, int] = field(compare=True)

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "errors": self.errors,
            "fn_count": self.fn_count,
            "fp_count": self.fp_count,
            "rate": self.rate,
            "ci_upper_95": self.ci_upper_95,
            "per_step_histogram": {str(k): v for k, v in sorted(self.per_step_histogram.items())},
        }


def classify_outcome(accused, pirates, halted_at: int) -> TrialOutcome:
    accused = frozenset(int(i) for i in accused)
    pirates = frozenset(int(i) for i in pirates)
    fn = not (accused & pirates)
    fp = not (accused <= pirates)
    if fp:
        kind = "false_positive"
    elif fn:
        kind = "false_negative"
    else:
        kind = "correct"
    return TrialOutcome(kind, accused, pirates, halted_at, fn, fp)


def _trial_seeds(master_seed: int, trial_index: int) -> dict[str, Seed]:
    return {
        "codegen": Seed(master_seed, "codegen", (trial_index,)),
        "registration": Seed(master_seed, "trial-index", (trial_index,)),
        "attack": Seed(master_seed, "attack", (trial_index,)),
        "erasure": Seed(master_seed, "erasure-resolution", (trial_index,)),
    }


def register_pirates(params: CodeParams, n_pirates: int, seed: Seed) -> tuple[int, ...]:
    """Uniform coalition without replacement; codeword-independent."""
    picks = seed.generator().choice(params.n_users, size=n_pirates, replace=False)
    return tuple(sorted(int(i) for i in picks))


def run_trial(config: ExperimentConfig, trial_index: int, debug_checks: bool = False) -> TrialOutcome:
    """Play one full game; deterministic given (config, trial_index)."""
    seeds = _trial_seeds(config.master_seed, trial_index)
    matrix, state = generate_code(config.params, seeds["codegen"])
    pirates = register_pirates(config.params, config.n_pirates, seeds["registration"])
    rows = matrix.bits[list(pirates)]
    if isinstance(config.strategy, Strategy):
        y = apply_strategy(config.strategy, rows, seeds["attack"])
    else:
        y = np.asarray(config.strategy(rows, seeds["attack"]), dtype=np.int8)
    violations = check_marking_assumption(rows, y)
    if violations.size:
        raise MarkingAssumptionError(
            f"strategy violated the marking constraint at trial {trial_index}, "
            f"columns {violations.tolist()}",
            columns=violations.tolist(),
            trial_index=trial_index,
        )
    if debug_checks and config.n_pirates == 3 and not (y == ERASURE).any():
        compressed = triples_indexed(matrix, y.astype(np.uint8))
        assert contains_triple(compressed, pirates), "pirate triple missing from parent family"
    result = trace(
        y, matrix, state, config.params, seeds["erasure"], config.threshold_mode
    )
    return classify_outcome(result.accused, pirates, result.halted_at)


def _run_chunk(config: ExperimentConfig, start: int, stop: int) -> list[TrialOutcome]:
    return [run_trial(config, i) for i in range(start, stop)]


def run_experiment(
    config: ExperimentConfig,
    threads: int = 1,
    per_trial_sink: Callable[[int, TrialOutcome], None] | None = None,
) -> ErrorStats:
    """Aggregate `config.trials` independent games into error statistics.

    The fold runs in trial-index order whatever the worker count, so the
    result is bit-identical for threads=1 and threads=k.
    """
    if threads < 1:
        raise ParameterError("threads must be >= 1")
    n = config.trials
    if threads == 1:
        outcomes = (_run_chunk(config, 0, n),)
    else:
        chunk = max(1, math.ceil(n / (threads * 8)))
        spans = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = tuple(
                pool.map(_run_chunk, *zip(*((config, a, b) for a, b in spans)))
            )

    errors = fn = fp = 0
    histogram: Counter = Counter()
    index = 0
    for batch in outcomes:
        for outcome in batch:
            if per_trial_sink is not None:
                per_trial_sink(index, outcome)
            histogram[outcome.halted_at] += 1
            if outcome.kind != "correct":
                errors += 1
            fn += outcome.false_negative
            fp += outcome.false_positive
            index += 1
    rate = errors / n
    return ErrorStats(n, errors, fn, fp, rate, clopper_pearson_upper(errors, n), dict(histogram))


def clopper_pearson_upper(errors: int, trials: int, confidence: float = 0.95) -> float:
    """One-sided exact binomial upper confidence bound on the error rate."""
    if errors >= trials:
        return 1.0
    return float(beta.ppf(confidence, errors + 1, trials - errors))


# ---------------------------------------------------------------------------
# score-identity audits


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    trials: int
    identity: str
    violations: tuple[dict, ...] = field(default=())


def sum_rule_audit(config: ExperimentConfig) -> AuditReport:
    """Check the exact score identities at p = 1/2 on every trial.

    Two pirates: normalized S(1) + S(2) equals 2*a_u + a_d where a_u / a_d
    count undetectable / detectable columns.  One pirate: normalized S(1)
    equals m.  Requires an erasure-free strategy: resolving '?' injects
    tracer randomness that the identities do not cover.
    """
    if config.params.bias != 0.5:
        raise ParameterError("the score identities hold at p = 1/2 only")
    if config.n_pirates not in (1, 2):
        raise ParameterError("the audit covers one- and two-pirate coalitions")
    if isinstance(config.strategy, Strategy) and not config.strategy.erasure_free:
        raise ParameterError("the audit requires an erasure-free strategy")

    identity = "S1+S2 == (2*a_u + a_d)*log2" if config.n_pirates == 2 else "S1 == m*log2"
    violations = []
    for i in range(config.trials):
        seeds = _trial_seeds(config.master_seed, i)
        matrix, state = generate_code(config.params, seeds["codegen"])
        pirates = register_pirates(config.params, config.n_pirates, seeds["registration"])
        rows = matrix.bits[list(pirates)]
        if isinstance(config.strategy, Strategy):
            y = apply_strategy(config.strategy, rows, seeds["attack"])
        else:
            y = np.asarray(config.strategy(rows, seeds["attack"]), dtype=np.int8)
        if (y == ERASURE).any():
            raise ParameterError("strategy emitted '?' during an erasure-free audit")
        yprime = y.astype(np.uint8)
        classes = classify_columns(yprime, state)
        scores = [score(matrix.bits[u], yprime, classes) for u in pirates]
        if config.n_pirates == 2:
            undet, det = detectable_columns(rows)
            lhs = scores[0].normalized + scores[1].normalized
            rhs = 2 * undet.size + det.size
        else:
            lhs = scores[0].normalized
            rhs = config.params.code_length
        if lhs != rhs:
            violations.append(
                {
                    "trial_index": i,
                    "pirates": list(pirates),
                    "normalized_scores": [s.normalized for s in scores],
                    "expected": rhs,
                    "attack_word": "".join(str(int(v)) for v in y),
                }
            )
    return AuditReport(not violations, config.trials, identity, tuple(violations))
