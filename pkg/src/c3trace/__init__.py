"""Probabilistic 3-secure fingerprint codes.

Codeword generation, collusion attacks under the marking assumption, the
two-phase tracing algorithm, an incremental parent-triple index, provable
error bounds with a minimal-length solver, and a Monte Carlo harness.
Users are indexed 0..N-1 everywhere.
"""

__version__ = "0.1.0"

from .attacks import (
    ERASURE,
    STRATEGY_KINDS,
    PirateSet,
    Strategy,
    apply_strategy,
    check_marking_assumption,
    detectable_columns,
)
from .bounds import (
    BoundBreakdown,
    f_polys,
    min_code_length_condition,
    min_length,
    scan_eps0,
    theorem1_bound,
    theorem2_bound,
)
from .codegen import (
    CodeMatrix,
    CodeParams,
    StateInfo,
    generate_code,
    validate_dimensions,
)
from .envelope_index import (
    CompressedTriples,
    contains_triple,
    expand,
    triples_indexed,
    triples_naive,
)
from .errors import (
    C3TraceError,
    ContractViolation,
    ExpansionOverflowError,
    InfeasibleError,
    MarkingAssumptionError,
    ParameterError,
)
from .rng import Seed
from .sim import (
    ErrorStats,
    ExperimentConfig,
    TrialOutcome,
    run_experiment,
    run_trial,
    sum_rule_audit,
)
from .tracing import (
    ColumnClasses,
    PairSet,
    Score,
    TraceResult,
    classify_columns,
    compute_pair_set,
    compute_t_prime,
    resolve_erasures,
    resolve_from_triples,
    score,
    threshold_exact,
    threshold_z0,
    trace,
)
