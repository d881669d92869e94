"""Command-line surface: compile constraints, verify plans, repair, benchmark.

Exit codes are a stable contract: 0 means safe (or converged), 1 means
unsafe (or not converged), 2 means usage, configuration, or input errors,
including inconclusive verification on an exhausted state budget.  Machine
output (--json/--csv) goes to stdout alone; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import yaml

from .errors import PlanVerifyError, PlannerError, StateBudgetExceeded
from .feedback import DeterministicPlanner, LlmPlanner, repair_loop
from .ltlf import (collect_aps, compile_safety_automaton, load_constraints,
                   normalize, pretty, to_dot, translate_structured)
from .plan_model import DEFAULT_STATE_BUDGET, load_plan, load_resources
from .scenarios import (canonical_specs, parse_scenario_specs, records_to_csv,
                        records_to_json, run_benchmark, REFERENCE_RESULTS)
from .verifier import SAFE, validate_safety

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNSAFE = 1
EXIT_ERROR = 2


def _emit_json(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _compile_pairs(constraints):
    return [(c, normalize(translate_structured(c))) for c in constraints]


def cmd_compile(args) -> int:
    constraints = load_constraints(args.constraints)
    os.makedirs(args.out_dir, exist_ok=True)
    review_lines = []
    for constraint, formula in _compile_pairs(constraints):
        alphabet = sorted(collect_aps(formula), key=lambda ap: ap.text)
        automaton = compile_safety_automaton(formula, alphabet,
                                             constraint_id=constraint.id)
        text = pretty(formula)
        with open(os.path.join(args.out_dir, f"{constraint.id}.ltlf.txt"),
                  "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        with open(os.path.join(args.out_dir, f"{constraint.id}.dot"),
                  "w", encoding="utf-8") as fh:
            fh.write(to_dot(automaton))
        review_lines.append(
            f"{constraint.id} [{constraint.constraint_type}]\n"
            f"  source: {constraint.source_text or '(none)'}\n"
            f"  ltlf:   {text}\n"
            f"  alphabet: {', '.join(ap.text for ap in alphabet)}\n"
            f"  automaton: {len(automaton.states)} states, "
            f"{len(automaton.violating)} violating\n")
    report = ("constraint review: confirm each formula matches its source "
              "requirement\n\n" + "\n".join(review_lines)
              if review_lines else "no constraints\n")
    with open(os.path.join(args.out_dir, "review.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(report)
    _say(f"compiled {len(constraints)} constraint(s) into {args.out_dir}")
    return EXIT_OK


def _write_dots(dot_dir, pairs) -> None:
    os.makedirs(dot_dir, exist_ok=True)
    for constraint, formula in pairs:
        alphabet = sorted(collect_aps(formula), key=lambda ap: ap.text)
        try:
            automaton = compile_safety_automaton(formula, alphabet,
                                                 constraint_id=constraint.id)
        except PlanVerifyError as exc:
            _say(f"skipping DOT for {constraint.id}: {exc}")
            continue
        with open(os.path.join(dot_dir, f"{constraint.id}.dot"), "w",
                  encoding="utf-8") as fh:
            fh.write(to_dot(automaton))


def _print_report(report) -> None:
    print(f"verdict: {report.verdict}")
    explored = ", ".join(f"{cid}={n}"
                         for cid, n in sorted(report.explored_states.items()))
    print(f"explored states: {explored or '(none)'}")
    for v in report.violations:
        print(f"violation {v.constraint_id} ({v.kind}):")
        print(f"  witness: {' -> '.join(v.witness_labels) or '(empty trace)'}")
        print(f"  {v.message}")


def cmd_verify(args) -> int:
    resources = load_resources(args.resources) if args.resources else None
    plan = load_plan(args.plan, resources)
    constraints = load_constraints(args.constraints)
    pairs = _compile_pairs(constraints)
    if args.dot_dir:
        _write_dots(args.dot_dir, pairs)
    try:
        report = validate_safety(plan.automaton(), pairs,
                                 state_budget=args.state_budget,
                                 find_all_witnesses=args.all_witnesses)
    except StateBudgetExceeded as exc:
        _say(f"inconclusive: {exc}")
        return EXIT_ERROR
    if args.json:
        _emit_json(report.to_json_dict(include_timing=args.timing))
    else:
        _print_report(report)
        if args.timing:
            print(f"wall time: {report.wall_time * 1000.0:.3f} ms")
    return EXIT_OK if report.verdict == SAFE else EXIT_UNSAFE


def _history_doc(outcome, include_timing: bool) -> dict:
    entries = []
    for entry in outcome.history:
        record = {
            "attempt": entry.attempt,
            "error": str(entry.error) if entry.error is not None else None,
            "plan": entry.plan.to_document(),
            "report": entry.report.to_json_dict(include_timing=include_timing),
        }
        if entry.prompt is not None:
            record["prompt"] = {
                "system_instructions": entry.prompt.system_instructions,
                "unsafe_plan": entry.prompt.unsafe_plan,
                "safety_violation": entry.prompt.safety_violation,
                "violation_trace": entry.prompt.violation_trace,
                "execution_context": entry.prompt.execution_context.render(),
                "output_schema": entry.prompt.output_schema,
            }
        entries.append(record)
    return {
        "converged": outcome.converged,
        "attempts": outcome.attempts,
        "final_verdict": outcome.final_report.verdict,
        "entries": entries,
    }


def cmd_repair(args) -> int:
    if args.max_attempts < 1:
        _say("--max-attempts must be at least 1")
        return EXIT_ERROR
    if args.planner == "llm":
        try:
            planner = LlmPlanner.from_env()
        except PlannerError as exc:
            _say(f"llm planner not configured: {exc}")
            return EXIT_ERROR
    else:
        planner = DeterministicPlanner()
    resources = load_resources(args.resources) if args.resources else None
    plan = load_plan(args.plan, resources)
    constraints = load_constraints(args.constraints)
    try:
        outcome = repair_loop(plan, constraints, planner,
                              max_attempts=args.max_attempts,
                              resources=resources,
                              state_budget=args.state_budget)
    except StateBudgetExceeded as exc:
        _say(f"inconclusive: {exc}")
        return EXIT_ERROR
    doc = _history_doc(outcome, include_timing=args.timing)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "final_plan.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(outcome.final_plan.to_document(), fh,
                      sort_keys=True, indent=2)
            fh.write("\n")
        with open(os.path.join(args.out, "history.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    if args.json:
        _emit_json(doc)
    else:
        state = "converged" if outcome.converged else "did not converge"
        print(f"{state} after {outcome.attempts} attempt(s); "
              f"final verdict: {outcome.final_report.verdict}")
        for entry in outcome.history:
            note = (f"planner error: {entry.error}" if entry.error is not None
                    else f"verdict {entry.report.verdict}")
            print(f"  attempt {entry.attempt}: {note}")
    return EXIT_OK if outcome.converged else EXIT_UNSAFE


def _print_bench_table(records, include_timing: bool) -> None:
    header = ["scenario", "trials", "failed", "base%", "framework%",
              "attempts", "explored"]
    if include_timing:
        header.append("verif_s")
    rows = []
    for r in records:
        row = [r.scenario_id, str(r.trials), str(r.failed_trials),
               f"{r.rule_satisfaction_pct_baseline:.2f}",
               f"{r.rule_satisfaction_pct_framework:.2f}",
               f"{r.mean_repair_attempts:.2f}", str(r.explored_states)]
        if include_timing:
            row.append(f"{r.mean_verification_time:.4f}")
        rows.append(row)
    widths = [max(len(header[i]), *(len(row[i]) for row in rows)) if rows
              else len(header[i]) for i in range(len(header))]
    for row in [header] + rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    print()
    print(REFERENCE_RESULTS["note"])
    for ref in REFERENCE_RESULTS["rows"]:
        print(f"  {ref['scenario_id']} {ref['scale']}: "
              f"base {ref['rule_satisfaction_pct_baseline']:.2f}%, "
              f"framework {ref['rule_satisfaction_pct_framework']:.2f}%, "
              f"attempts {ref['mean_repair_attempts']:.2f}, "
              f"verif {ref['mean_verification_time_s']:.2f}s, "
              f"states {ref['explored_states']}")


def cmd_bench(args) -> int:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            document = (yaml.safe_load(fh)
                        if args.spec.endswith((".yaml", ".yml"))
                        else json.load(fh))
        specs = parse_scenario_specs(document)
    else:
        specs = list(canonical_specs())
    if args.seed is not None:
        from dataclasses import replace
        specs = [replace(spec, seed=args.seed) for spec in specs]
    if args.planner == "llm":
        try:
            planner = LlmPlanner.from_env()
        except PlannerError as exc:
            _say(f"llm planner not configured: {exc}")
            return EXIT_ERROR
    else:
        planner = DeterministicPlanner()
    records = run_benchmark(specs, trials=args.trials, planner=planner,
                            max_attempts=args.max_attempts,
                            state_budget=args.state_budget,
                            dump_dir=args.dump_dir)
    if args.json:
        sys.stdout.write(records_to_json(records, include_timing=args.timing))
    elif args.csv:
        sys.stdout.write(records_to_csv(records, include_timing=args.timing))
    else:
        _print_bench_table(records, include_timing=args.timing)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planverify",
        description="Verify task plans against temporal safety constraints.")
    parser.add_argument("--verbose", action="store_true",
                        help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile",
                       help="translate constraints and export automata")
    p.add_argument("constraints", help="constraint file (JSON or YAML)")
    p.add_argument("out_dir", help="directory for .ltlf.txt/.dot/review.txt")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", help="check a plan against constraints")
    p.add_argument("plan", help="plan file (JSON or YAML)")
    p.add_argument("constraints", help="constraint file")
    p.add_argument("--resources", help="resource file for capability checks")
    p.add_argument("--json", action="store_true",
                   help="machine-readable report on stdout")
    p.add_argument("--all-witnesses", action="store_true",
                   help="collect every distinct violating transition")
    p.add_argument("--state-budget", type=int, default=DEFAULT_STATE_BUDGET,
                   help="product-state cap per constraint")
    p.add_argument("--dot-dir", help="also export safety automata as DOT")
    p.add_argument("--timing", action="store_true",
                   help="include wall time in output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("repair", help="run the bounded repair loop")
    p.add_argument("plan")
    p.add_argument("constraints")
    p.add_argument("--resources")
    p.add_argument("--planner", choices=("deterministic", "llm"),
                   default="deterministic")
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("--state-budget", type=int, default=DEFAULT_STATE_BUDGET)
    p.add_argument("--out", help="directory for final_plan.json/history.json")
    p.add_argument("--json", action="store_true")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("bench", help="run the scenario benchmark")
    p.add_argument("spec", nargs="?",
                   help="scenario spec file (default: the three stock scenarios)")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=None,
                   help="override every scenario's base seed")
    p.add_argument("--planner", choices=("deterministic", "llm"),
                   default="deterministic")
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("--state-budget", type=int, default=DEFAULT_STATE_BUDGET)
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--dump-dir", help="write generated scenarios for replay")
    p.add_argument("--timing", action="store_true",
                   help="include verification time in output")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PlanVerifyError, OSError, ValueError, yaml.YAMLError) as exc:
        _say(f"error: {exc}")
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
