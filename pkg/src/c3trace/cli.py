"""Command-line surface: generate, attack, trace, triples, length, simulate.

Thin adapters over the library modules.  JSON outputs are wrapped as
{"manifest": ..., "result": ...}; CSV outputs carry the manifest in a
leading '# manifest: ...' comment line.  Randomized subcommands require an
explicit seed.  Exit codes: 0 success, 1 parameter/usage errors, 2 contract
violations (marking-assumption failure, infeasibility, expansion overflow).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import shlex
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .attacks import (
    ERASURE,
    STRATEGY_KINDS,
    Strategy,
    apply_strategy,
    read_word_file,
    write_word_file,
)
from .bounds import min_length, table_rows, theorem2_bound
from .codegen import (
    CodeParams,
    generate_code,
    read_code_file,
    read_state_file,
    validate_dimensions,
    write_code_file,
    write_state_file,
)
from .envelope_index import expand, expansion_cap, triples_indexed, triples_naive
from .errors import ContractViolation, ParameterError
from .rng import Seed
from .sim import ExperimentConfig, run_experiment, sum_rule_audit
from .tracing import trace


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise ParameterError(message)


@dataclass(frozen=True)
class RunManifest:
    tool_version: str
    command_line: str
    master_seed: int | None
    input_digests: dict[str, str]
    timestamp_utc: str

    def as_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "command_line": self.command_line,
            "master_seed": self.master_seed,
            "input_digests": self.input_digests,
            "timestamp_utc": self.timestamp_utc,
        }


def build_manifest(argv, seed: int | None, input_paths) -> RunManifest:
    digests = {}
    for path in input_paths:
        with open(path, "rb") as fh:
            digests[str(path)] = hashlib.sha256(fh.read()).hexdigest()
    return RunManifest(
        tool_version=__version__,
        command_line=shlex.join(["c3trace", *argv]),
        master_seed=seed,
        input_digests=digests,
        timestamp_utc=datetime.now(timezone.utc).isoformat(),
    )


def _emit_json(manifest: RunManifest, result, out=sys.stdout) -> None:
    json.dump({"manifest": manifest.as_dict(), "result": result}, out, indent=2)
    out.write("\n")


def _parse_eps0(raw: str, eps: float | None) -> float:
    if raw.startswith("fraction:"):
        if eps is None:
            raise ParameterError("fraction:<x> form needs --eps")
        return float(raw.split(":", 1)[1]) * eps
    return float(raw)


def _parse_pirates(raw: str) -> list[int]:
    try:
        pirates = [int(x) for x in raw.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ParameterError(f"--pirates expects comma-separated integers: {exc}")
    if not (1 <= len(pirates) <= 3) or len(set(pirates)) != len(pirates):
        raise ParameterError("--pirates expects 1 to 3 distinct user indices")
    return pirates


def _strategy_from_args(args) -> Strategy:
    weights = None
    if args.weights is not None:
        weights = tuple(float(x) for x in args.weights.split(","))
    return Strategy(args.attack, weights=weights, erase_prob=args.erase_prob)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args, argv) -> int:
    params = CodeParams(args.users, args.length, args.p, args.eps0)
    matrix, state = generate_code(params, Seed(args.seed, "codegen"))
    write_code_file(args.out_code, matrix, params.bias)
    write_state_file(args.out_state, state)
    manifest = build_manifest(argv, args.seed, [])
    _emit_json(
        manifest,
        {
            "code_file": args.out_code,
            "state_file": args.out_state,
            "n_users": params.n_users,
            "code_length": params.code_length,
            "bias": params.bias,
        },
    )
    return 0


def _cmd_attack(args, argv) -> int:
    matrix, _bias = read_code_file(args.code)
    pirates = _parse_pirates(args.pirates)
    for u in pirates:
        if not (0 <= u < matrix.n_users):
            raise ParameterError(f"pirate index {u} out of range [0, {matrix.n_users})")
    strategy = _strategy_from_args(args)
    y = apply_strategy(strategy, matrix.bits[pirates], Seed(args.seed, "attack"))
    write_word_file(args.out, y)
    manifest = build_manifest(argv, args.seed, [args.code])
    _emit_json(
        manifest,
        {
            "word_file": args.out,
            "strategy": strategy.kind,
            "pirates": pirates,
            "erasures": int((y == ERASURE).sum()),
        },
    )
    return 0


def _cmd_trace(args, argv) -> int:
    matrix, bias = read_code_file(args.code)
    state = read_state_file(args.state, bias)
    y = read_word_file(args.word)
    if (y == ERASURE).any() and args.seed is None:
        raise ParameterError("the word contains '?'; erasure resolution needs --seed")
    params = CodeParams(matrix.n_users, matrix.code_length, bias, args.eps0)
    report = validate_dimensions(matrix, state, params)
    if not report.ok:
        raise ParameterError("; ".join(report.problems))
    if y.shape[0] != params.code_length:
        raise ParameterError(
            f"word length {y.shape[0]} != code length {params.code_length}"
        )
    seed = Seed(args.seed if args.seed is not None else 0, "erasure-resolution")
    result = trace(y, matrix, state, params, seed, args.threshold)
    manifest = build_manifest(argv, args.seed, [args.code, args.state, args.word])
    _emit_json(
        manifest,
        {
            "accused": sorted(result.accused),
            "halted_at": result.halted_at,
            "diagnostics": result.diagnostics,
        },
    )
    return 0


def _cmd_triples(args, argv) -> int:
    matrix, _bias = read_code_file(args.code)
    y = read_word_file(args.word)
    if (y == ERASURE).any():
        raise ParameterError("triple enumeration needs a fully resolved 0/1 word")
    cap = args.max_expand if args.max_expand is not None else expansion_cap()
    if args.naive:
        triples = triples_naive(matrix, y.astype(np.uint8), cap=None)
        result = {
            "mode": "naive",
            "triple_count": len(triples),
            "triples": sorted(triples) if len(triples) <= cap else None,
        }
    else:
        compressed = triples_indexed(matrix, y.astype(np.uint8))
        result = {
            "mode": "indexed",
            "class_counts": compressed.class_counts,
            "max_live_classes": max(
                (p + t for p, t in compressed.column_stats), default=0
            ),
        }
        triples = expand(compressed, limit=cap)
        result["triple_count"] = len(triples)
        result["triples"] = sorted(triples)
    manifest = build_manifest(argv, None, [args.code, args.word])
    _emit_json(manifest, result)
    return 0


def _cmd_length(args, argv) -> int:
    manifest = build_manifest(argv, None, [])
    if args.table:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["table", "n_users", "eps", "eps0_fraction", "code_length"])
        for row in table_rows():
            writer.writerow(
                [row["table"], row["n_users"], row["eps"], row["eps0_fraction"], row["code_length"]]
            )
        sys.stdout.write(f"# manifest: {json.dumps(manifest.as_dict())}\n")
        sys.stdout.write(out.getvalue())
        return 0
    if args.users is None or args.eps is None or args.eps0 is None:
        raise ParameterError("length needs --users, --eps, and --eps0 (or --table paper)")
    eps0 = _parse_eps0(args.eps0, args.eps)
    m = min_length(args.users, args.eps, eps0)
    breakdown = theorem2_bound(args.users, m, eps0)
    _emit_json(
        manifest,
        {
            "n_users": args.users,
            "eps": args.eps,
            "eps0": eps0,
            "code_length": m,
            "bound": breakdown.as_dict(),
        },
    )
    return 0


def _config_from_json(payload: dict) -> ExperimentConfig:
    try:
        params = CodeParams(
            payload["params"]["n_users"],
            payload["params"]["code_length"],
            payload["params"].get("bias", 0.5),
            payload["params"]["eps0"],
        )
        strat = payload["strategy"]
        strategy = Strategy(
            strat["kind"],
            weights=tuple(strat["weights"]) if strat.get("weights") else None,
            erase_prob=strat.get("erase_prob"),
        )
        if "master_seed" not in payload:
            raise KeyError("master_seed")
        return ExperimentConfig(
            params=params,
            n_pirates=payload["n_pirates"],
            strategy=strategy,
            trials=payload["trials"],
            master_seed=payload["master_seed"],
            threshold_mode=payload.get("threshold_mode"),
        )
    except KeyError as exc:
        raise ParameterError(f"simulate config is missing field {exc}")


def _cmd_simulate(args, argv) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    config = _config_from_json(payload)
    rows: list[tuple] = []
    sink = None
    if args.per_trial:
        def sink(index, outcome):  # noqa: E306
            rows.append(
                (
                    index,
                    outcome.kind,
                    outcome.halted_at,
                    " ".join(map(str, sorted(outcome.accused))),
                    " ".join(map(str, sorted(outcome.pirates))),
                )
            )
    if args.audit:
        report = sum_rule_audit(config)
        result = {
            "audit": report.identity,
            "passed": report.passed,
            "trials": report.trials,
            "violations": list(report.violations),
        }
    else:
        stats = run_experiment(config, threads=args.threads, per_trial_sink=sink)
        result = stats.as_dict()
    manifest = build_manifest(argv, config.master_seed, [args.config])
    if args.per_trial:
        with open(args.per_trial, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# manifest: {json.dumps(manifest.as_dict())}\n")
            writer = csv.writer(fh)
            writer.writerow(["trial", "kind", "halted_at", "accused", "pirates"])
            writer.writerows(rows)
    _emit_json(manifest, result)
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="c3trace", description=__doc__)
    parser.add_argument("--version", action="version", version=f"c3trace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a code matrix and its state file")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--p", type=float, default=0.5, help="bias parameter, 1/2 <= p < 1")
    p.add_argument("--eps0", type=float, default=0.01)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-code", default="code.c3code")
    p.add_argument("--out-state", default="state.c3state")

    p = sub.add_parser("attack", help="produce an attack word from pirate codewords")
    p.add_argument("--code", required=True)
    p.add_argument("--pirates", required=True, help="comma-separated user indices")
    p.add_argument("--attack", required=True, choices=STRATEGY_KINDS)
    p.add_argument("--erase-prob", type=float, default=None)
    p.add_argument("--weights", default=None, help="comma-separated, unbalanced only")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="word.c3word")

    p = sub.add_parser("trace", help="trace an attack word to accused users")
    p.add_argument("--code", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--eps0", type=float, required=True)
    p.add_argument("--threshold", choices=["exact", "z0"], default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("triples", help="enumerate parent triples of a resolved word")
    p.add_argument("--code", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--naive", action="store_true")
    p.add_argument("--max-expand", type=int, default=None)

    p = sub.add_parser("length", help="minimal code length for a target error bound")
    p.add_argument("--users", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--eps0", help="a value, or fraction:<x> meaning x * eps")
    p.add_argument("--table", choices=["paper"], default=None,
                   help="reproduce the published comparison tables as CSV")

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--per-trial", default=None, help="write per-trial outcomes to this CSV")
    p.add_argument("--audit", action="store_true", help="run the score-identity audit instead")

    return parser


_COMMANDS = {
    "generate": _cmd_generate,
    "attack": _cmd_attack,
    "trace": _cmd_trace,
    "triples": _cmd_triples,
    "length": _cmd_length,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args, argv)
    except ParameterError as exc:
        print(f"c3trace: error: {exc}", file=sys.stderr)
        return 1
    except ContractViolation as exc:
        print(f"c3trace: contract violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
