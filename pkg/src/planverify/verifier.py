"""Exhaustive product-space safety verification of task plans.

For each constraint the verifier runs a depth-first search over product
states (plan state, obligation formula).  Transitions progress the formula
through the valuation observed at the successor plan state; reaching the
false constant is a step violation, and a terminal plan state whose
obligation rejects emptiness is an end-of-trace violation.  The first
counterexample path found is returned as a replayable witness.

The search is explicit but never materializes the automaton product:
formulas are interned to small ids, valuations are bitmasks over the
constraint alphabet, and progression results are memoized per (formula,
valuation class).  Product states whose obligation reached the true
constant are popped but not expanded; no violation is reachable from them
and they accept any trace end, so verdicts are unchanged.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Iterable, List, Optional

from .ap_model import (EXECUTING, START, Valuation, matches, matches_level,
                       valuation)
from .errors import StateBudgetExceeded, TooLargeForOracle
from .ltlf import (FALSE, TRUE, Formula, StructuredConstraint, collect_aps,
                   empty_accepts, evaluate_trace, normalize, progress,
                   translate_structured)
from .plan_model import (DEFAULT_STATE_BUDGET, DONE, RUNNING, PlanState,
                         TaskPlan, done_event, start_event)

logger = logging.getLogger(__name__)

STEP_VIOLATION = "step_violation"
END_OF_TRACE = "end_of_trace"

SAFE = "safe"
UNSAFE = "unsafe"

DEFAULT_MAX_WITNESSES = 10
DEFAULT_ORACLE_TASK_BOUND = 8


@dataclass(frozen=True)
class ProductState:
    plan_state: PlanState
    safety_state: Formula


@dataclass
class Violation:
    """One counterexample for one constraint, replayable from the initial state."""

    constraint_id: str
    constraint_text: str
    formula: Formula
    kind: str  # step_violation | end_of_trace
    witness_events: tuple
    witness_valuations: tuple
    violating_plan_state: PlanState
    constraint: Optional[StructuredConstraint] = None

    @property
    def witness_labels(self) -> list:
        return [ev.label for ev in self.witness_events]

    @property
    def message(self) -> str:
        if self.kind == STEP_VIOLATION:
            if self.witness_events:
                return (f"{self.witness_events[-1].label} drives constraint "
                        f"{self.constraint_id} into a violating state")
            return f"constraint {self.constraint_id} is violated before any event"
        return (f"the trace ends with constraint {self.constraint_id} "
                f"still waiting on a required event")


@dataclass
class VerificationReport:
    verdict: str
    violations: List[Violation]
    explored_states: dict
    wall_time: float = 0.0

    @property
    def violated_constraint_ids(self) -> list:
        seen = []
        for v in self.violations:
            if v.constraint_id not in seen:
                seen.append(v.constraint_id)
        return seen

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {
            "verdict": self.verdict,
            "violations": [
                {
                    "constraint_id": v.constraint_id,
                    "kind": v.kind,
                    "witness_events": v.witness_labels,
                    "message": v.message,
                }
                for v in self.violations
            ],
            "explored_states": dict(sorted(self.explored_states.items())),
        }
        if include_timing:
            out["wall_time_ms"] = round(self.wall_time * 1000.0, 3)
        return out


def _never_matching_aps(auto: PlanAutomaton, alphabet) -> list:
    dead = []
    for ap in alphabet:
        if ap.kind == EXECUTING:
            alive = any(matches_level(ap, ev) for ev in auto.start_events)
        else:
            alive = (any(matches(ap, ev) for ev in auto.start_events)
                     or any(matches(ap, ev) for ev in auto.done_events))
        if not alive:
            dead.append(ap)
    return dead


def _explore(auto: PlanAutomaton, constraint: Optional[StructuredConstraint],
             constraint_id: str, constraint_text: str, formula: Formula,
             budget: int, find_all: bool, max_witnesses: int):
    """One DFS over the product for one constraint.

    Returns (violations, explored).  LIFO order is fixed: successors are
    pushed in reverse enabled order so the lexicographically first event is
    explored first, which makes witnesses reproducible.
    """
    f0 = normalize(formula)
    alphabet = sorted(collect_aps(f0), key=lambda ap: ap.text)
    for ap in _never_matching_aps(auto, alphabet):
        logger.warning("constraint %s: proposition %s can never hold in plan %s",
                       constraint_id, ap.text, auto.plan.plan_id)

    n_tasks = len(auto.tasks)
    n_aps = len(alphabet)

    # static pulse masks per (task, kind) and task masks per level proposition
    start_mask = [0] * n_tasks
    done_mask = [0] * n_tasks
    exec_entries = []  # (alphabet bit, task bitmask)
    for bit, ap in enumerate(alphabet):
        if ap.kind == EXECUTING:
            tmask = 0
            for i in range(n_tasks):
                if matches_level(ap, auto.start_events[i]):
                    tmask |= 1 << i
            exec_entries.append((1 << bit, tmask))
        else:
            for i in range(n_tasks):
                if matches(ap, auto.start_events[i]):
                    start_mask[i] |= 1 << bit
                if matches(ap, auto.done_events[i]):
                    done_mask[i] |= 1 << bit

    mask_val = {}

    def val_of(mask: int) -> Valuation:
        got = mask_val.get(mask)
        if got is None:
            got = mask_val[mask] = frozenset(
                ap for b, ap in enumerate(alphabet) if mask >> b & 1)
        return got

    formulas = [f0]
    fid_of = {f0: 0}
    empty_ok = [empty_accepts(f0)]
    false_id = None
    true_id = None
    if f0 == FALSE:
        false_id = 0
    if f0 == TRUE:
        true_id = 0
    prog = {}

    def progress_id(fid: int, mask: int) -> int:
        nonlocal false_id, true_id
        key = (fid, mask)
        got = prog.get(key)
        if got is None:
            g = progress(formulas[fid], val_of(mask))
            got = fid_of.get(g)
            if got is None:
                got = len(formulas)
                fid_of[g] = got
                formulas.append(g)
                empty_ok.append(empty_accepts(g))
                if g == FALSE:
                    false_id = got
                elif g == TRUE:
                    true_id = got
            prog[key] = got
        return got

    # frames: (codes, running task bitmask, fid, parent frame, event, valuation mask)
    frames = [(auto.initial.codes, 0, 0, -1, None, 0)]
    stack = [0]
    visited = set()
    explored = 0
    violations = []
    witness_keys = set()

    def witness(frame_idx: int, extra=None):
        events = []
        masks = []
        idx = frame_idx
        while idx >= 0:
            _, _, _, parent, ev, vmask = frames[idx]
            if ev is not None:
                events.append(ev)
                masks.append(vmask)
            idx = parent
        events.reverse()
        masks.reverse()
        if extra is not None:
            events.append(extra[0])
            masks.append(extra[1])
        return tuple(events), tuple(val_of(m) for m in masks)

    def record(kind, frame_idx, plan_codes, extra=None, dedup_key=None):
        if dedup_key is not None:
            if dedup_key in witness_keys:
                return False
            witness_keys.add(dedup_key)
        events, vals = witness(frame_idx, extra)
        violations.append(Violation(
            constraint_id=constraint_id, constraint_text=constraint_text,
            formula=formula, kind=kind, witness_events=events,
            witness_valuations=vals,
            violating_plan_state=PlanState(codes=plan_codes),
            constraint=constraint))
        return True

    while stack:
        frame_idx = stack.pop()
        codes, rmask, fid, _, _, _ = frames[frame_idx]
        key = (codes, fid)
        if key in visited:
            continue
        visited.add(key)
        explored += 1
        if explored > budget:
            raise StateBudgetExceeded(
                f"constraint {constraint_id}: product exploration exceeded "
                f"budget {budget}", explored=explored)

        if fid == false_id:
            # only the initial state can carry false (false is never pushed)
            record(STEP_VIOLATION, frame_idx, codes)
            if not find_all or len(violations) >= max_witnesses:
                return violations, explored
            continue

        if all(c == DONE for c in codes):
            if not empty_ok[fid]:
                if record(END_OF_TRACE, frame_idx, codes,
                          dedup_key=("end", codes)) and (
                        not find_all or len(violations) >= max_witnesses):
                    return violations, explored
            continue

        if fid == true_id:
            continue  # obligation discharged; nothing downstream can violate

        pairs = auto.enabled_pairs(codes)
        for kind, i in reversed(pairs):
            lst = list(codes)
            if kind == START:
                lst[i] = RUNNING
                rmask2 = rmask | (1 << i)
                pulse = start_mask[i]
                ev = auto.start_events[i]
            else:
                lst[i] = DONE
                rmask2 = rmask & ~(1 << i)
                pulse = done_mask[i]
                ev = auto.done_events[i]
            codes2 = tuple(lst)
            mask = pulse
            for bit, tmask in exec_entries:
                if rmask2 & tmask:
                    mask |= bit
            fid2 = progress_id(fid, mask)
            if fid2 == false_id:
                if record(STEP_VIOLATION, frame_idx, codes2, extra=(ev, mask),
                          dedup_key=(codes, kind, i)) and (
                        not find_all or len(violations) >= max_witnesses):
                    return violations, explored
                continue
            if (codes2, fid2) in visited:
                continue
            frames.append((codes2, rmask2, fid2, frame_idx, ev, mask))
            stack.append(len(frames) - 1)

    return violations, explored


def validate_safety(plan_automaton, constraint_pairs,
                    *, state_budget: int = DEFAULT_STATE_BUDGET,
                    find_all_witnesses: bool = False,
                    max_witnesses: int = DEFAULT_MAX_WITNESSES) -> VerificationReport:
    """Check every (constraint, formula) pair against the plan.

    ``plan_automaton`` may be a PlanAutomaton or a TaskPlan.  Each constraint
    gets its own bounded DFS; ``explored_states`` maps constraint id to the
    number of distinct product states popped.  Raises StateBudgetExceeded
    (inconclusive, never safe) when a search outgrows ``state_budget``.
    """
    auto = plan_automaton.automaton() if isinstance(plan_automaton, TaskPlan) \
        else plan_automaton
    started = time.perf_counter()
    violations = []
    explored_states = {}
    for constraint, formula in constraint_pairs:
        cid = constraint.id if constraint is not None else f"c{len(explored_states)}"
        ctext = constraint.source_text if constraint is not None else ""
        try:
            found, explored = _explore(
                auto, constraint, cid, ctext, formula,
                budget=state_budget, find_all=find_all_witnesses,
                max_witnesses=max_witnesses)
        except StateBudgetExceeded as exc:
            exc.partial_report = VerificationReport(
                verdict=UNSAFE if violations else SAFE,
                violations=violations, explored_states=explored_states,
                wall_time=time.perf_counter() - started)
            raise
        violations.extend(found)
        explored_states[cid] = explored
    return VerificationReport(
        verdict=UNSAFE if violations else SAFE,
        violations=violations,
        explored_states=explored_states,
        wall_time=time.perf_counter() - started)


def check_plan(plan: TaskPlan, constraints: Iterable[StructuredConstraint],
               **kwargs) -> VerificationReport:
    """Translate structured constraints and verify the plan against them."""
    pairs = [(c, translate_structured(c)) for c in constraints]
    return validate_safety(plan.automaton(), pairs, **kwargs)


def all_witnesses(plan_automaton, constraint_pair,
                  *, max_witnesses: int = DEFAULT_MAX_WITNESSES,
                  state_budget: int = DEFAULT_STATE_BUDGET) -> list:
    """Every distinct first-divergence witness for one constraint (bounded).

    Witnesses are deduplicated by their violating transition (or terminal
    state for end-of-trace violations).
    """
    constraint, formula = constraint_pair
    auto = plan_automaton.automaton() if isinstance(plan_automaton, TaskPlan) \
        else plan_automaton
    found, _ = _explore(
        auto, constraint, constraint.id if constraint else "c0",
        constraint.source_text if constraint else "", formula,
        budget=state_budget, find_all=True, max_witnesses=max_witnesses)
    return found


def replay_witness(plan: TaskPlan, violation: Violation) -> bool:
    """Re-execute a witness and confirm it reaches the claimed violation."""
    auto = plan.automaton()
    state = auto.initial
    f = normalize(violation.formula)
    alphabet = sorted(collect_aps(f), key=lambda ap: ap.text)
    try:
        for ev in violation.witness_events:
            state = auto.apply(state, ev)
            f = progress(f, valuation(plan, state, ev, alphabet))
    except Exception:
        return False
    if state.codes != violation.violating_plan_state.codes:
        return False
    if violation.kind == STEP_VIOLATION:
        return f == FALSE
    return auto.is_marked(state) and not empty_accepts(f)


# --- independent brute-force oracle ------------------------------------------


class _FoundViolation(Exception):
    def __init__(self, events):
        self.events = events


def brute_force_check(plan: TaskPlan, formula: Formula,
                      *, task_bound: int = DEFAULT_ORACLE_TASK_BOUND):
    """Enumerate every resource-feasible maximal interleaving and evaluate.

    Returns ("safe", None) or ("unsafe", witness_events).  Independent of
    the DFS/progression path: interleavings come from a naive recursive
    enumerator over task status maps, and each trace is judged by the
    direct recursive evaluator.  Raises TooLargeForOracle above the bound.
    """
    if len(plan.tasks) > task_bound:
        raise TooLargeForOracle(
            f"{len(plan.tasks)} tasks exceeds the oracle bound {task_bound}")
    alphabet = sorted(collect_aps(formula), key=lambda ap: ap.text)
    order = sorted(plan.tasks)
    tasks = plan.tasks
    status = {tid: "pending" for tid in order}

    def moves():
        out = []
        for tid in order:
            t = tasks[tid]
            if (status[tid] == "pending"
                    and all(status[p] == "done" for p in t.predecessors)
                    and not any(status[o] == "running"
                                and tasks[o].resource == t.resource
                                for o in order)):
                out.append(("start", tid))
        out.extend(("done", tid) for tid in order if status[tid] == "running")
        return out

    def step_valuation(event):
        trues = set()
        running = [start_event(tasks[tid]) for tid in order
                   if status[tid] == "running"]
        for ap in alphabet:
            if ap.kind == EXECUTING:
                if any(matches_level(ap, ev) for ev in running):
                    trues.add(ap)
            elif matches(ap, event):
                trues.add(ap)
        return frozenset(trues)

    events: list = []
    vals: list = []

    def explore():
        options = moves()
        if not options:
            if not evaluate_trace(formula, vals):
                raise _FoundViolation(tuple(events))
            return
        for kind, tid in options:
            status[tid] = "running" if kind == "start" else "done"
            ev = start_event(tasks[tid]) if kind == "start" else done_event(tasks[tid])
            events.append(ev)
            vals.append(step_valuation(ev))
            explore()
            events.pop()
            vals.pop()
            status[tid] = "pending" if kind == "start" else "running"

    try:
        explore()
    except _FoundViolation as hit:
        return UNSAFE, list(hit.events)
    return SAFE, None
