"""Command-line entry point.

Subcommands: run (execute a program under a schedule and record its trace),
validate (check a spec against recorded traces, single or corpus), verify
(predictive-trace verification), ground (dump the ground spec), explain
(per-step store diagnostics for a trace).

Exit codes: 0 = valid / Safe / finished, 1 = invalid / Violation / bad,
2 = Unknown, usage error, or internal error.  JSON reports carry a stable
``schema: 1`` field.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import interp
from .abstract import AbstractEngine, BadState, Blocked
from .grounding import DEFAULT_INSTANTIATION_CAP, GroundingError, ground_spec
from .messages import TraceError, format_message, load_trace, serialize_trace
from .rules import SpecError, load_spec
from .validation import ValidationTimeout, validate
from .verification import (
    DEFAULT_STATE_CAP,
    STATE_CAP_ENV,
    Safe,
    SubTraceError,
    Violation,
    verify,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_UNKNOWN = 2

# Histogram buckets for corpus validation reports: cumulative counts of
# traces validating at least this many steps.
PREFIX_BUCKETS = (1, 25, 50, 75)


class UsageError(Exception):
    pass


def _emit(report: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        report = {"schema": SCHEMA_VERSION, **report}
        print(json.dumps(report, indent=2, sort_keys=True), file=out)
    else:
        for line in report.get("lines", []):
            print(line, file=out)


def _state_cap(args) -> int:
    if getattr(args, "state_cap", None):
        return args.state_cap
    return int(os.environ.get(STATE_CAP_ENV, DEFAULT_STATE_CAP))


# ---------------------------------------------------------------------------
# run


def _cmd_run(args) -> int:
    program = interp.load_program(args.program)
    if not interp.uses_framework_init(program):
        print("error: program's main expression must begin by invoking a "
              "framework (fwk) init function", file=sys.stderr)
        return EXIT_UNKNOWN
    if args.schedule is not None:
        text = args.schedule
        if text.startswith("@"):
            text = Path(text[1:]).read_text(encoding="utf-8")
        schedule = interp.parse_schedule(text)
    else:
        schedule = interp.Schedule(seed=args.seed)
    result = interp.run(program, schedule, max_steps=args.max_steps)
    text = serialize_trace(result.trace)
    if args.trace_out:
        Path(args.trace_out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"status: {result.status} ({result.steps} steps, "
          f"{len(result.trace.messages)} messages)", file=sys.stderr)
    if result.status == interp.FINISHED:
        return EXIT_OK
    if result.status == interp.BAD_STATUS:
        return EXIT_FAIL
    return EXIT_UNKNOWN


# ---------------------------------------------------------------------------
# validate


def _validation_report_dict(path, report) -> dict:
    d = {
        "command": "validate",
        "trace": str(path),
        "verdict": "valid" if report.valid else "invalid",
        "prefix_len": report.prefix_len,
        "prefix_len_filtered": report.prefix_len_filtered,
        "total_len": report.total_len,
    }
    if not report.valid:
        d["blocking_message"] = format_message(report.blocking_message)
        d["reason"] = report.reason
        d["last_firing_rules"] = [i + 1 for i in report.last_firing_rules]
        d["blocking_permitted"] = sorted(format_message(m) for m in report.blocking_permitted)
        d["blocking_prohibited"] = sorted(format_message(m) for m in report.blocking_prohibited)
    if report.inconsistency_steps:
        d["inconsistent_steps"] = list(report.inconsistency_steps)
    return d


def _validate_one(spec, path, timeout):
    try:
        trace = load_trace(path)
        report = validate(spec, trace, timeout=timeout)
        return _validation_report_dict(path, report)
    except (ValidationTimeout, GroundingError) as e:
        return {"command": "validate", "trace": str(path), "verdict": "unknown",
                "reason": str(e)}


def _cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    if args.corpus:
        paths = sorted(Path(args.corpus).glob("*.trace"))
        if not paths:
            print(f"error: no *.trace files under {args.corpus}", file=sys.stderr)
            return EXIT_UNKNOWN
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            results = list(pool.map(lambda p: _validate_one(spec, p, args.timeout), paths))
        results.sort(key=lambda d: d["trace"])
        histogram = {f">={b}": 0 for b in PREFIX_BUCKETS}
        n_valid = 0
        lines = []
        for r in results:
            if r["verdict"] == "valid":
                n_valid += 1
            steps = r.get("prefix_len", 0)
            for b in PREFIX_BUCKETS:
                if steps >= b:
                    histogram[f">={b}"] += 1
            extra = "" if r["verdict"] == "valid" else f" [{r.get('reason', '')}]"
            lines.append(f"{r['trace']}: {r['verdict']} "
                         f"(prefix {r.get('prefix_len', '?')}/{r.get('total_len', '?')}){extra}")
        lines.append(f"valid: {n_valid}/{len(results)}")
        lines.append("cumulative validated-prefix histogram:")
        for b in PREFIX_BUCKETS:
            lines.append(f"  >= {b:>3} steps: {histogram[f'>={b}']}")
        report = {"command": "validate", "corpus": str(args.corpus),
                  "results": results, "valid": n_valid, "total": len(results),
                  "prefix_histogram": histogram, "lines": lines}
        _emit(report, args.report)
        return EXIT_OK if n_valid == len(results) else EXIT_FAIL
    try:
        trace = load_trace(args.trace)
        report = validate(spec, trace, timeout=args.timeout)
    except ValidationTimeout as e:
        _emit({"command": "validate", "trace": args.trace, "verdict": "unknown",
               "reason": str(e), "lines": [f"unknown: {e}"]}, args.report)
        return EXIT_UNKNOWN
    d = _validation_report_dict(args.trace, report)
    if report.valid:
        d["lines"] = [f"valid ({report.prefix_len}/{report.total_len} messages; "
                      f"{report.prefix_len_filtered} spec-relevant)"]
    else:
        d["lines"] = [
            f"invalid at message {report.prefix_len + 1}: "
            f"{format_message(report.blocking_message)}",
            f"reason: {report.reason}",
            f"validated prefix: {report.prefix_len}/{report.total_len} messages "
            f"({report.prefix_len_filtered} spec-relevant)",
            f"last rules touching this message: "
            f"{[i + 1 for i in report.last_firing_rules] or 'none'}",
        ]
    _emit(d, args.report)
    return EXIT_OK if report.valid else EXIT_FAIL


# ---------------------------------------------------------------------------
# verify


def _cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    trace = load_trace(args.trace)
    result = verify(spec, trace, mode=args.mode, state_cap=_state_cap(args),
                    timeout=args.timeout)
    lines = []
    if isinstance(result, Safe):
        verdict = "safe"
        lines.append(f"Safe: no rearrangement reaches a protocol violation "
                     f"({result.states_explored} states explored, "
                     f"certificate size {result.certificate_size})")
        if result.unreachable_units:
            lines.append(f"units never openable: "
                         f"{[i + 1 for i in result.unreachable_units]}")
        code = EXIT_OK
    elif isinstance(result, Violation):
        verdict = "violation"
        lines.append(f"Violation: witness of {len(result.witness.messages)} messages, "
                     f"unit sequence {[i + 1 for i in result.subtrace_sequence]}")
        lines.append(f"witness ends with: {format_message(result.witness.messages[-1])}")
        code = EXIT_FAIL
    else:
        verdict = "unknown"
        lines.append(f"Unknown: {result.reason}")
        code = EXIT_UNKNOWN
    if args.witness_out and isinstance(result, Violation):
        Path(args.witness_out).write_text(serialize_trace(result.witness), encoding="utf-8")
        lines.append(f"witness written to {args.witness_out}")
    if args.stats:
        lines.append(f"states explored: {result.states_explored}")
    report = {"command": "verify", "trace": args.trace, "spec": args.spec,
              "verdict": verdict, "states_explored": result.states_explored,
              "lines": lines}
    if isinstance(result, Violation):
        report["subtrace_sequence"] = [i + 1 for i in result.subtrace_sequence]
        report["witness"] = [format_message(m) for m in result.witness.messages]
    if isinstance(result, Safe):
        report["certificate_size"] = result.certificate_size
        report["unreachable_units"] = [i + 1 for i in result.unreachable_units]
    _emit(report, args.report)
    return code


# ---------------------------------------------------------------------------
# ground


def _cmd_ground(args) -> int:
    spec = load_spec(args.spec)
    trace = load_trace(args.trace)
    ground = ground_spec(spec, trace, cap=args.grounding_cap)
    engine = AbstractEngine(ground)
    lines = []
    arrow = {"permit": "->", "prohibit": "-/>"}
    for gr in ground.rules:
        lines.append(f"{gr.matcher} {arrow[gr.polarity]} {_target_text(gr.target)}")
    lines.append("")
    lines.append(f"alphabet: {len(ground.alphabet)} messages (+1 OTHER class)")
    lines.append(f"{'rule':>5} {'instances':>10} {'dfa states (per instance)':>28}")
    per_rule_states: dict[int, list[int]] = {}
    for compiled in engine.rules:
        per_rule_states.setdefault(compiled.source_index, []).append(compiled.dfa.n_states)
    for idx, count in enumerate(ground.instance_counts):
        sizes = per_rule_states.get(idx, [])
        lines.append(f"{idx + 1:>5} {count:>10} {','.join(map(str, sizes)) or '-':>28}")
    report = {"command": "ground", "rules": len(ground.rules),
              "alphabet": [format_message(m) for m in ground.alphabet],
              "instance_counts": list(ground.instance_counts), "lines": lines}
    _emit(report, args.report)
    return EXIT_OK


def _target_text(message) -> str:
    return format_message(message)


# ---------------------------------------------------------------------------
# explain


def _cmd_explain(args) -> int:
    spec = load_spec(args.spec)
    trace = load_trace(args.trace)
    ground = ground_spec(spec, trace)
    engine = AbstractEngine(ground)
    state = engine.initial_state()
    print(f"initial: permitted-back {len(state.permitted)}, "
          f"prohibited-in {len(state.prohibited)}")
    for i, m in enumerate(trace.messages, start=1):
        if m.is_dis():
            inner = m.unwrap()
            predicted = inner in state.prohibited
            status = "dis (predicted)" if predicted else "dis (MISSED by the spec)"
            print(f"{i:>4} {format_message(m):<60} {status}")
            return EXIT_OK if predicted else EXIT_FAIL
        result = engine.step(state, m)
        if isinstance(result, Blocked):
            print(f"{i:>4} {format_message(m):<60} BLOCKED (not permitted)")
            _print_store(state)
            return EXIT_FAIL
        if isinstance(result, BadState):
            print(f"{i:>4} {format_message(m):<60} BAD (prohibited in-message)")
            _print_store(state)
            return EXIT_FAIL
        fired = engine.fired_rules(result.rule_states)
        fired_text = ", ".join(
            f"#{f.source_index + 1}{'->' if f.polarity == 'permit' else '-/>'}"
            f"{format_message(f.target)}"
            for f in fired
        )
        delta = _store_delta(state, result)
        line = f"{i:>4} {format_message(m):<60} ok"
        if fired_text:
            line += f"  fires [{fired_text}]"
        if delta:
            line += f"  {delta}"
        if result.inconsistent:
            line += "  (WARNING: permit/prohibit inconsistency)"
        print(line)
        state = result
    print("trace validated to the end")
    return EXIT_OK


def _store_delta(before, after) -> str:
    parts = []
    for name, b, a in (("permitted", before.permitted, after.permitted),
                       ("prohibited", before.prohibited, after.prohibited)):
        added = a - b
        removed = b - a
        for m in sorted(added, key=lambda x: x.sort_key()):
            parts.append(f"+{name[:4]}:{format_message(m)}")
        for m in sorted(removed, key=lambda x: x.sort_key()):
            parts.append(f"-{name[:4]}:{format_message(m)}")
    return " ".join(parts)


def _print_store(state) -> None:
    print("  permitted-back:")
    for m in sorted(state.permitted, key=lambda x: x.sort_key()):
        print(f"    {format_message(m)}")
    print("  prohibited-in:")
    for m in sorted(state.prohibited, key=lambda x: x.sort_key()):
        print(f"    {format_message(m)}")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lifeguard",
        description="Validation and predictive verification of event-driven "
                    "app-framework protocol traces",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="execute a program and record its trace")
    p_run.add_argument("--program", required=True)
    group = p_run.add_mutually_exclusive_group(required=True)
    group.add_argument("--schedule", help="comma-separated event indices, or @file")
    group.add_argument("--seed", type=int, help="pseudorandom schedule seed")
    p_run.add_argument("--max-steps", type=int, default=10000)
    p_run.add_argument("--trace-out")

    p_val = sub.add_parser("validate", help="check a spec against recorded traces")
    p_val.add_argument("--spec", required=True)
    p_val.add_argument("--trace")
    p_val.add_argument("--corpus", help="directory of *.trace files")
    p_val.add_argument("--timeout", type=float, help="seconds per trace")
    p_val.add_argument("--jobs", type=int, default=1)
    p_val.add_argument("--report", choices=("text", "json"), default="text")

    p_ver = sub.add_parser("verify", help="predictive-trace verification")
    p_ver.add_argument("--spec", required=True)
    p_ver.add_argument("--trace", required=True)
    p_ver.add_argument("--mode", default="exhaustive",
                       help="exhaustive or bounded:K")
    p_ver.add_argument("--witness-out")
    p_ver.add_argument("--stats", action="store_true")
    p_ver.add_argument("--timeout", type=float)
    p_ver.add_argument("--state-cap", type=int, dest="state_cap")
    p_ver.add_argument("--report", choices=("text", "json"), default="text")

    p_gnd = sub.add_parser("ground", help="dump the ground spec for a trace")
    p_gnd.add_argument("--spec", required=True)
    p_gnd.add_argument("--trace", required=True)
    p_gnd.add_argument("--grounding-cap", type=int, default=DEFAULT_INSTANTIATION_CAP)
    p_gnd.add_argument("--report", choices=("text", "json"), default="text")

    p_exp = sub.add_parser("explain", help="per-step store diagnostics")
    p_exp.add_argument("--spec", required=True)
    p_exp.add_argument("--trace", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "timeout", None) is not None and args.timeout < 1:
        parser.error("--timeout must be at least 1 second")
    try:
        if args.subcommand == "run":
            return _cmd_run(args)
        if args.subcommand == "validate":
            if bool(args.trace) == bool(args.corpus):
                parser.error("validate needs exactly one of --trace / --corpus")
            return _cmd_validate(args)
        if args.subcommand == "verify":
            return _cmd_verify(args)
        if args.subcommand == "ground":
            return _cmd_ground(args)
        if args.subcommand == "explain":
            return _cmd_explain(args)
        parser.error(f"unknown subcommand {args.subcommand}")
    except (TraceError, SpecError, SubTraceError, GroundingError,
            interp.ProgramError, interp.ScheduleError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN
    return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
