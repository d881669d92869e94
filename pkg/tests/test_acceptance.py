"""End-to-end acceptance suite.

Seven headline guarantees, one test each.  Every test prints a single
``[PASS] n/7`` line with its measured numbers once its assertions hold,
so a full run reads as a seven-line scorecard (run pytest with -s).

 1. canonical constraint automata: exact pinned shape, compiled in <1ms
 2. progression engine agrees with the direct trace evaluator, exhaustively
 3. product search agrees with a brute-force interleaving oracle
 4. gear assembly case study: unsafe witness, one targeted repair, safe
 5. benchmark: repair loop converges on every trial the baseline fails
 6. every reported witness replays to its claimed violation
 7. verify and bench emit byte-identical JSON across repeated runs
"""

import itertools
import json
import random
import time
from pathlib import Path

from planverify.ap_model import parse_ap
from planverify.cli import EXIT_OK, EXIT_UNSAFE, main
from planverify.feedback import DeterministicPlanner, deterministic_repair, repair_loop
from planverify.ltlf import (
    FALSE,
    MUTUAL_EXCLUSION,
    ORDERING,
    TRUE,
    And,
    Ap,
    Eventually,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    Release,
    StructuredConstraint,
    Until,
    WeakNext,
    compile_safety_automaton,
    empty_accepts,
    evaluate_trace,
    normalize,
    progress,
    translate_structured,
)
from planverify.plan_model import Task, TaskPlan, done_ap, executing_ap, start_ap
from planverify.scenarios import canonical_specs, records_to_json, run_benchmark
from planverify.verifier import (
    SAFE,
    UNSAFE,
    all_witnesses,
    brute_force_check,
    check_plan,
    replay_witness,
    validate_safety,
)

FIXTURES = Path(__file__).parent / "fixtures"
GEAR_PLAN = str(FIXTURES / "gear_plan.json")
GEAR_RESOURCES = str(FIXTURES / "gear_resources.json")
GEAR_CONSTRAINTS = str(FIXTURES / "gear_constraints.json")


# --- 1. canonical automata: exact structure, sub-millisecond compile ---------

AP_A = parse_ap("ap/p/a/r1/start(f)/c")
AP_B = parse_ap("ap/p/b/r2/start(g)/c")
AP_C = parse_ap("ap/p/c/r1/executing(f)/s")
AP_D = parse_ap("ap/p/d/r2/executing(g)/s")

ORDER_F = normalize(Until(Not(Ap(AP_B)), Ap(AP_A)))
MUTEX_F = normalize(Globally(Not(And(frozenset((Ap(AP_C), Ap(AP_D)))))))


def _best_compile_ms(formula, alphabet, runs=200):
    best = float("inf")
    for _ in range(runs):
        t0 = time.perf_counter()
        compile_safety_automaton(formula, alphabet, "c")
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def test_acceptance_1_canonical_automata():
    order = compile_safety_automaton(ORDER_F, [AP_A, AP_B], "ordering")
    assert len(order.states) == 3
    q0 = order.initial
    q1 = order.transition[(q0, frozenset([AP_A]))]
    qv = order.transition[(q0, frozenset([AP_B]))]
    assert order.state_formula[q1] == TRUE
    assert order.state_formula[qv] == FALSE
    assert order.violating == frozenset([qv])
    assert order.transition[(q0, frozenset())] == q0
    assert order.transition[(q0, frozenset([AP_A, AP_B]))] == q1
    for cls in (frozenset(), frozenset([AP_A]), frozenset([AP_B]),
                frozenset([AP_A, AP_B])):
        assert order.transition[(q1, cls)] == q1
        assert order.transition[(qv, cls)] == qv

    mutex = compile_safety_automaton(MUTEX_F, [AP_C, AP_D], "mutex")
    assert len(mutex.states) == 2
    m0 = mutex.initial
    mv = mutex.transition[(m0, frozenset([AP_C, AP_D]))]
    assert mutex.violating == frozenset([mv])
    for cls in (frozenset(), frozenset([AP_C]), frozenset([AP_D])):
        assert mutex.transition[(m0, cls)] == m0
    for cls in (frozenset(), frozenset([AP_C]), frozenset([AP_D]),
                frozenset([AP_C, AP_D])):
        assert mutex.transition[(mv, cls)] == mv

    ms_order = _best_compile_ms(ORDER_F, [AP_A, AP_B])
    ms_mutex = _best_compile_ms(MUTEX_F, [AP_C, AP_D])
    assert ms_order < 1.0, f"ordering automaton took {ms_order:.3f}ms"
    assert ms_mutex < 1.0, f"mutex automaton took {ms_mutex:.3f}ms"
    print(f"\n[PASS] 1/7 canonical automata: 3-state ordering, 2-state mutex, "
          f"compile {ms_order:.3f}/{ms_mutex:.3f}ms")


# --- 2. progression engine vs direct trace evaluator -------------------------
#
# Family: every structurally distinct formula with at most 5 AST nodes over
# {a, b, true, false} and the full operator set (16,068 formulas), each run
# against all 341 traces of length <= 4 over the four valuation classes.
# Length 4 is the family's maximum temporal nesting depth, so every formula
# is fully unwound and the end-of-trace rule is probed at every depth; the
# 192 formulas with <= 3 nodes are additionally run against the full 1,365
# traces of length <= 5.  The engine side walks the trace tree with
# progress()/empty_accepts(); the oracle evaluates each prefix directly.

CLASSES = (frozenset(), frozenset([AP_A]), frozenset([AP_B]),
           frozenset([AP_A, AP_B]))


def _formula_family():
    unary = (Not, Next, WeakNext, Eventually, Globally)
    binary = (Until, Release, Implies)
    by_size = {1: [TRUE, FALSE, Ap(AP_A), Ap(AP_B)]}
    seen = set(by_size[1])
    for size in range(2, 6):
        bucket = []
        for op in unary:
            for child in by_size[size - 1]:
                f = op(child)
                if f not in seen:
                    seen.add(f)
                    bucket.append(f)
        for left_size in range(1, size - 1):
            for left in by_size[left_size]:
                for right in by_size[size - 1 - left_size]:
                    for op in binary:
                        f = op(left, right)
                        if f not in seen:
                            seen.add(f)
                            bucket.append(f)
                    for op in (And, Or):
                        f = op(frozenset((left, right)))
                        if f not in seen:
                            seen.add(f)
                            bucket.append(f)
        by_size[size] = bucket
    return by_size, seen


def test_acceptance_2_progression_vs_trace_oracle():
    t0 = time.perf_counter()
    by_size, seen = _formula_family()
    family = [f for bucket in by_size.values() for f in bucket]
    sizes = {s: len(b) for s, b in by_size.items()}
    assert sizes == {1: 4, 2: 20, 3: 168, 4: 1480, 5: 14396}
    assert len(family) == 16068
    # both canonical constraint shapes are members
    assert Until(Not(Ap(AP_B)), Ap(AP_A)) in seen
    assert Globally(Not(And(frozenset((Ap(AP_A), Ap(AP_B)))))) in seen

    memo = {}

    def step(residual, cls):
        key = (residual, cls)
        out = memo.get(key)
        if out is None:
            out = memo[key] = progress(residual, cls)
        return out

    def compare(formulas, depth):
        mismatches = 0
        for f in formulas:
            stack = [(normalize(f), ())]
            while stack:
                residual, trace = stack.pop()
                if empty_accepts(residual) != evaluate_trace(f, trace):
                    mismatches += 1
                if len(trace) < depth:
                    for cls in CLASSES:
                        stack.append((step(residual, cls), trace + (cls,)))
        return mismatches

    mism_main = compare(family, 4)
    mism_deep = compare([f for s in range(1, 4) for f in by_size[s]], 5)
    elapsed = time.perf_counter() - t0
    assert mism_main == 0, f"{mism_main} mismatches on the length-4 box"
    assert mism_deep == 0, f"{mism_deep} mismatches on the length-5 probe"
    assert elapsed < 60.0, f"comparison took {elapsed:.1f}s"
    checked = len(family) * 341 + 192 * 1365
    print(f"[PASS] 2/7 progression vs trace oracle: {len(family)} formulas, "
          f"{checked} verdicts, 0 mismatches in {elapsed:.1f}s")


# --- 3. product search vs brute-force interleaving oracle --------------------


def _plan_of(n, edges, assign, plan_id="x"):
    tasks = {}
    for i in range(n):
        preds = tuple(f"T{j}" for j in range(n) if (j, i) in edges)
        task = Task(id=f"T{i}", function="move_loaded", part=f"p{i}",
                    resource=assign[i % len(assign)], process="assembly",
                    dest_context="station", predecessors=preds)
        tasks[task.id] = task
    return TaskPlan(tasks=tasks, plan_id=plan_id)


def _all_dags(n):
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]

    def acyclic(edges):
        adj = {i: [j for (a, j) in edges if a == i] for i in range(n)}
        seen, on_stack = set(), set()

        def dfs(u):
            seen.add(u)
            on_stack.add(u)
            for v in adj[u]:
                if v in on_stack or (v not in seen and not dfs(v)):
                    return False
            on_stack.discard(u)
            return True

        return all(dfs(i) for i in range(n) if i not in seen)

    return [frozenset(s) for k in range(len(pairs) + 1)
            for s in itertools.combinations(pairs, k) if acyclic(frozenset(s))]


def _all_constraints(plan):
    """Every ordering over the plan's start/done events plus every mutex."""
    events = []
    for tid in sorted(plan.tasks):
        task = plan.tasks[tid]
        events.append(start_ap(task))
        events.append(done_ap(task))
    out = [StructuredConstraint(id="c", constraint_type=ORDERING,
                                first=a, second=b)
           for a in events for b in events]
    levels = [executing_ap(plan.tasks[tid]) for tid in sorted(plan.tasks)]
    out.extend(StructuredConstraint(id="c", constraint_type=MUTUAL_EXCLUSION,
                                    first=a, second=b)
               for a, b in itertools.combinations_with_replacement(levels, 2))
    return out


CANONICAL_SHAPES = {
    "chain4": (4, ((0, 1), (1, 2), (2, 3))),
    "diamond4": (4, ((0, 1), (0, 2), (1, 3), (2, 3))),
    "parallel4": (4, ()),
    "forkjoin5": (5, ((0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4))),
    "chain5": (5, ((0, 1), (1, 2), (2, 3), (3, 4))),
    "pairs5": (5, ((0, 1), (2, 3))),
}


def _random_instance(rng):
    n = rng.randint(1, 5)
    tasks = {}
    for i in range(n):
        preds = tuple(f"T{j}" for j in range(i) if rng.random() < 0.3)
        task = Task(id=f"T{i}", function="move_loaded", part=f"p{i}",
                    resource=f"r{rng.randint(1, 2)}", process="assembly",
                    dest_context="station", predecessors=preds)
        tasks[task.id] = task
    plan = TaskPlan(tasks=tasks, plan_id="rand")
    ids = sorted(tasks)
    ta, tb = tasks[rng.choice(ids)], tasks[rng.choice(ids)]
    if rng.random() < 0.5:
        first = start_ap(ta) if rng.random() < 0.5 else done_ap(ta)
        second = start_ap(tb) if rng.random() < 0.5 else done_ap(tb)
        constraint = StructuredConstraint(id="c", constraint_type=ORDERING,
                                          first=first, second=second)
    else:
        constraint = StructuredConstraint(id="c",
                                          constraint_type=MUTUAL_EXCLUSION,
                                          first=executing_ap(ta),
                                          second=executing_ap(tb))
    return plan, constraint


RANDOM_SUITE_SEED = 20260819
RANDOM_SUITE_SIZE = 1000


def _check_against_oracle(plan, automaton, constraint):
    formula = translate_structured(constraint)
    expected, _ = brute_force_check(plan, formula)
    report = validate_safety(automaton, [(constraint, formula)])
    return report.verdict == expected


def test_acceptance_3_search_vs_brute_force():
    t0 = time.perf_counter()
    mismatches = checked = 0

    dags = _all_dags(3)
    assert len(dags) == 25
    for edges in dags:
        for assign in itertools.product(("r1", "r2"), repeat=3):
            plan = _plan_of(3, edges, assign)
            automaton = plan.automaton()
            for constraint in _all_constraints(plan):
                mismatches += not _check_against_oracle(
                    plan, automaton, constraint)
                checked += 1

    for n, edges in CANONICAL_SHAPES.values():
        plan = _plan_of(n, frozenset(edges), ("r1", "r2"))
        automaton = plan.automaton()
        for constraint in _all_constraints(plan):
            mismatches += not _check_against_oracle(plan, automaton, constraint)
            checked += 1

    rng = random.Random(RANDOM_SUITE_SEED)
    for _ in range(RANDOM_SUITE_SIZE):
        plan, constraint = _random_instance(rng)
        mismatches += not _check_against_oracle(
            plan, constraint=constraint, automaton=plan.automaton())
        checked += 1

    elapsed = time.perf_counter() - t0
    assert mismatches == 0, f"{mismatches} verdict mismatches"
    assert elapsed < 300.0, f"oracle comparison took {elapsed:.1f}s"
    print(f"[PASS] 3/7 search vs brute force: {checked} instances "
          f"(25 DAGs x 8 assignments x 42 constraints, 6 shapes, "
          f"{RANDOM_SUITE_SIZE} random), 0 mismatches in {elapsed:.1f}s")


# --- 4. gear assembly case study ---------------------------------------------


def test_acceptance_4_gear_case_study(gear_plan, gear_constraints):
    report = check_plan(gear_plan, gear_constraints)
    assert report.verdict == UNSAFE
    violation = report.violations[0]
    assert violation.constraint_id == "order_mcp_before_sg"
    labels = violation.witness_labels
    assert "SG_MOVE.start" in labels
    sg = labels.index("SG_MOVE.start")
    assert "MCP_MOVE.start" not in labels[:sg]
    assert replay_witness(gear_plan, violation)

    repaired = deterministic_repair(gear_plan, violation)
    assert "MCP_MOVE" in repaired.tasks["SG_MOVE"].predecessors
    assert check_plan(repaired, gear_constraints).verdict == SAFE

    outcome = repair_loop(gear_plan, gear_constraints,
                          DeterministicPlanner(), max_attempts=5)
    assert outcome.converged
    assert outcome.attempts == 1
    assert outcome.final_report.verdict == SAFE
    print("[PASS] 4/7 gear case study: unsafe witness replayed, one repair "
          "(MCP_MOVE -> SG_MOVE), loop converged in 1 attempt")


# --- 5. benchmark: repair loop vs baseline over the canonical scenarios ------


def test_acceptance_5_benchmark():
    records = []
    walls = []
    for spec in canonical_specs():
        t0 = time.perf_counter()
        record = run_benchmark([spec], trials=20,
                               planner=DeterministicPlanner(),
                               max_attempts=5)[0]
        walls.append(time.perf_counter() - t0)
        records.append(record)
        assert record.failed_trials == 0
        assert record.rule_satisfaction_pct_framework == 100.0
        assert 0.0 <= record.rule_satisfaction_pct_baseline < 100.0
        assert record.mean_repair_attempts > 0.0
        assert walls[-1] < 120.0, (
            f"{record.scenario_id} took {walls[-1]:.1f}s")

    explored = [r.explored_states for r in records]
    assert explored[0] < explored[1] < explored[2]

    doc = json.loads(records_to_json(records, include_reference=True))
    reference = {row["scenario_id"]: row for row in doc["reference"]["rows"]}
    assert reference["S1"]["rule_satisfaction_pct_framework"] == 92.50
    assert reference["S2"]["rule_satisfaction_pct_framework"] == 91.67
    assert reference["S3"]["rule_satisfaction_pct_framework"] == 86.25
    assert reference["S1"]["mean_repair_attempts"] == 1.80
    assert reference["S2"]["mean_repair_attempts"] == 2.20
    assert reference["S3"]["mean_repair_attempts"] == 3.90
    assert reference["S1"]["explored_states"] == 170
    assert reference["S2"]["explored_states"] == 1378
    assert reference["S3"]["explored_states"] == 14618

    summary = ", ".join(
        f"{r.scenario_id} base={r.rule_satisfaction_pct_baseline:.1f}% "
        f"states={r.explored_states} ({w:.1f}s)"
        for r, w in zip(records, walls))
    print(f"[PASS] 5/7 benchmark: framework 100% on all scenarios; {summary}")


# --- 6. witness replay across the random suite --------------------------------


def test_acceptance_6_witness_replay():
    rng = random.Random(RANDOM_SUITE_SEED)
    total = replayed = unsafe = 0
    for _ in range(RANDOM_SUITE_SIZE):
        plan, constraint = _random_instance(rng)
        formula = translate_structured(constraint)
        report = validate_safety(plan.automaton(), [(constraint, formula)])
        if report.verdict != UNSAFE:
            continue
        unsafe += 1
        witnesses = list(report.violations)
        witnesses.extend(all_witnesses(plan, (constraint, formula)))
        for violation in witnesses:
            total += 1
            replayed += replay_witness(plan, violation)
    assert unsafe > 0
    assert total > 0
    assert replayed == total, f"{total - replayed} of {total} witnesses broke"
    print(f"[PASS] 6/7 witness replay: {replayed}/{total} witnesses from "
          f"{unsafe} unsafe instances replay to their claimed violation")


# --- 7. byte-identical JSON across repeated runs ------------------------------


def test_acceptance_7_determinism(tmp_path, capsys):
    verify_argv = ["verify", GEAR_PLAN, GEAR_CONSTRAINTS,
                   "--resources", GEAR_RESOURCES, "--json"]
    assert main(verify_argv) == EXIT_UNSAFE
    first = capsys.readouterr().out
    assert main(verify_argv) == EXIT_UNSAFE
    second = capsys.readouterr().out
    assert first.encode() == second.encode()
    json.loads(first)

    spec_file = tmp_path / "scenarios.json"
    spec_file.write_text(json.dumps({"scenarios": [
        {"name": "d1", "robots": 2, "parts": 3,
         "ordering_rules": 1, "mutex_rules": 1, "seed": 7},
        {"name": "d2", "robots": 3, "parts": 4,
         "ordering_rules": 2, "mutex_rules": 1, "seed": 9},
    ]}))
    bench_argv = ["bench", str(spec_file), "--trials", "5", "--json"]
    assert main(bench_argv) == EXIT_OK
    bench_first = capsys.readouterr().out
    assert main(bench_argv) == EXIT_OK
    bench_second = capsys.readouterr().out
    assert bench_first.encode() == bench_second.encode()
    json.loads(bench_first)
    print("[PASS] 7/7 determinism: verify and bench JSON byte-identical "
          "across repeated runs")
