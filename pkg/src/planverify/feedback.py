"""Violation feedback prompts, repair planners, and the bounded repair loop.

An unsafe verdict turns into a six-section prompt: system instructions, the
serialized plan, the violated rule, the witness trace, the execution context,
and the reply contract.  A planner consumes the prompt and proposes a revised
plan; the loop re-verifies and repeats up to a fixed attempt budget.

Two planners ship here.  DeterministicPlanner applies the single-edge repair
rule directly and serves as the testing oracle.  LlmPlanner forwards the
prompt over a chat-completion endpoint and validates the reply strictly:
invalid replies surface as planner errors that consume an attempt, because
model output never gets the benefit of the doubt.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import httpx

from .ap_model import EXECUTING, AtomicProposition, matches, matches_level, parse_ap
from .errors import (CyclicPlan, MalformedAp, PlanError, PlannerError,
                     SchemaError, TransportError, UnrecognizedRequirement,
                     Unrepairable, UnresolvableProposition)
from .ltlf import (MUTUAL_EXCLUSION, ORDERING, StructuredConstraint, normalize,
                   pretty, translate_structured)
from .plan_model import (DEFAULT_STATE_BUDGET, ResourceSet, Task, TaskPlan,
                         build_plan, done_event, executing_ap, reaches,
                         start_ap, start_event)
from .verifier import (END_OF_TRACE, SAFE, VerificationReport, Violation,
                       validate_safety)

SYSTEM_INSTRUCTIONS = (
    "You are a plan expert in pre-execution mode. A multi-robot task plan "
    "failed safety verification. Revise the plan so that every safety rule "
    "holds. Keep exactly the same set of task ids and only change predecessor "
    "lists; never invent, drop, or reassign tasks. Reply with a single JSON "
    "object matching the output schema, with no surrounding prose."
)

OUTPUT_SCHEMA = ('{"tasks": [{"id": "TASK_ID", "predecessors": ["TASK_ID"], '
                 '"change_reason": "explanation of the repair"}]}')

CHAT_COMPLETIONS_PATH = "/v1/chat/completions"

ENV_BASE_URL = "PLANVERIFY_LLM_BASE_URL"
ENV_MODEL = "PLANVERIFY_LLM_MODEL"
ENV_API_KEY = "PLANVERIFY_LLM_API_KEY"


@dataclass(frozen=True)
class ExecutionContext:
    """What the cell offers: functions, agents, locations, parts."""

    functions: tuple
    agents: tuple
    locations: tuple
    parts: tuple

    def render(self) -> str:
        def row(name, values):
            return f"{name} = [{', '.join(values)}]"
        return "\n".join((row("functions", self.functions),
                          row("agents", self.agents),
                          row("locations", self.locations),
                          row("parts", self.parts)))


def execution_context(plan: TaskPlan,
                      resources: Optional[ResourceSet] = None) -> ExecutionContext:
    tasks = plan.tasks.values()
    if resources is not None:
        agents = tuple(sorted(resources.resources))
    else:
        agents = tuple(sorted({t.resource for t in tasks}))
    return ExecutionContext(
        functions=tuple(sorted({t.function for t in tasks})),
        agents=agents,
        locations=tuple(sorted({loc for t in tasks
                                for loc in (t.source_context, t.dest_context)
                                if loc})),
        parts=tuple(sorted({t.part for t in tasks if t.part})))


@dataclass
class FeedbackPrompt:
    """Six prompt sections plus the objects they were rendered from."""

    system_instructions: str
    unsafe_plan: str
    safety_violation: str
    violation_trace: str
    execution_context: ExecutionContext
    output_schema: str
    plan: TaskPlan = field(repr=False, default=None)
    violation: Violation = field(repr=False, default=None)

    def user_message(self) -> str:
        blocks = (("UNSAFE PLAN", self.unsafe_plan),
                  ("SAFETY VIOLATION", self.safety_violation),
                  ("VIOLATION TRACE", self.violation_trace),
                  ("EXECUTION CONTEXT", self.execution_context.render()),
                  ("OUTPUT SCHEMA", self.output_schema))
        return "\n\n".join(f"=== {name} ===\n{body}" for name, body in blocks)


def resolve_tasks(plan: TaskPlan, ap) -> list:
    """Tasks whose events the proposition can name, in id order."""
    if not isinstance(ap, AtomicProposition):
        ap = parse_ap(ap)
    out = []
    for tid in sorted(plan.tasks):
        task = plan.tasks[tid]
        if ap.kind == EXECUTING:
            hit = matches_level(ap, start_event(task))
        else:
            hit = matches(ap, start_event(task)) or matches(ap, done_event(task))
        if hit:
            out.append(task)
    return out


def _task_label(plan: TaskPlan, ap_text) -> str:
    """Task id if the proposition names exactly one task, else the AP text."""
    try:
        found = resolve_tasks(plan, ap_text)
    except MalformedAp:
        return str(ap_text)
    if len(found) == 1:
        return found[0].id
    return ap_text.text if isinstance(ap_text, AtomicProposition) else str(ap_text)


def _render_trace(plan: TaskPlan, v: Violation) -> str:
    lines = [f"witness_events = [{', '.join(v.witness_labels)}]"]
    c = v.constraint
    if c is not None and c.constraint_type == ORDERING:
        first = _task_label(plan, c.first)
        second = _task_label(plan, c.second)
        if v.kind == END_OF_TRACE:
            lines.append(f"the trace ends and the required {first} never occurred")
        else:
            lines.append(f"the trace shows {second} begins before the required {first}")
    elif c is not None and c.constraint_type == MUTUAL_EXCLUSION:
        first = _task_label(plan, c.first)
        second = _task_label(plan, c.second)
        lines.append(f"the trace shows {first} and {second} overlapping; "
                     f"they must never execute at the same time")
    elif v.kind == END_OF_TRACE:
        lines.append("the trace ends with the constraint still unsatisfied; "
                     "a required event never occurred")
    else:
        lines.append("the last event drives the constraint into a violating state")
    return "\n".join(lines)


def build_feedback(plan: TaskPlan, v: Violation, ctx: ExecutionContext,
                   extra: Sequence[Violation] = ()) -> FeedbackPrompt:
    """Render one violation (plus optional extras) into the six-section prompt."""
    formula_text = pretty(normalize(v.formula))
    violation_lines = [v.constraint_text or f"constraint {v.constraint_id}",
                       f"LTLf: {formula_text}"]
    trace_text = _render_trace(plan, v)
    for other in extra:
        violation_lines.append("")
        violation_lines.append(other.constraint_text or f"constraint {other.constraint_id}")
        violation_lines.append(f"LTLf: {pretty(normalize(other.formula))}")
        trace_text += "\n\n" + _render_trace(plan, other)
    return FeedbackPrompt(
        system_instructions=SYSTEM_INSTRUCTIONS,
        unsafe_plan=json.dumps(plan.to_document(), sort_keys=True, indent=2),
        safety_violation="\n".join(violation_lines),
        violation_trace=trace_text,
        execution_context=ctx,
        output_schema=OUTPUT_SCHEMA,
        plan=plan,
        violation=v)


# --- repair strategies --------------------------------------------------------


def _resolve_one(plan: TaskPlan, constraint_id: str, ap_text) -> Task:
    try:
        found = resolve_tasks(plan, ap_text)
    except MalformedAp as exc:
        raise UnresolvableProposition(
            f"constraint {constraint_id}: {exc}") from exc
    if not found:
        raise UnresolvableProposition(
            f"constraint {constraint_id}: no task in plan {plan.plan_id!r} "
            f"matches proposition {ap_text}")
    if len(found) > 1:
        ids = ", ".join(t.id for t in found)
        raise Unrepairable(
            f"constraint {constraint_id}: proposition {ap_text} is ambiguous "
            f"(matches {ids}); refusing to pick one")
    return found[0]


def deterministic_repair(plan: TaskPlan, v: Violation) -> TaskPlan:
    """Single-edge repair: force the required order with one precedence edge.

    Ordering(a before b) adds a -> b; mutual exclusion tries c -> d, then the
    reverse.  An order already implied by existing edges means the report was
    stale and the plan comes back unchanged.
    """
    c = v.constraint
    if c is None or c.constraint_type not in (ORDERING, MUTUAL_EXCLUSION):
        raise Unrepairable(
            f"violation of {v.constraint_id!r} has no edge-insertion repair")
    first = _resolve_one(plan, c.id, c.first)
    second = _resolve_one(plan, c.id, c.second)
    if first.id == second.id:
        raise Unrepairable(
            f"constraint {c.id}: both propositions resolve to task {first.id}")
    if c.constraint_type == ORDERING:
        if reaches(plan, first.id, second.id):
            return plan
        try:
            return plan.with_edge(first.id, second.id)
        except CyclicPlan as exc:
            raise Unrepairable(
                f"constraint {c.id}: ordering {first.id} -> {second.id} "
                f"conflicts with existing precedence") from exc
    if (reaches(plan, first.id, second.id)
            or reaches(plan, second.id, first.id)):
        return plan
    try:
        return plan.with_edge(first.id, second.id)
    except CyclicPlan:
        pass
    try:
        return plan.with_edge(second.id, first.id)
    except CyclicPlan as exc:
        raise Unrepairable(
            f"constraint {c.id}: neither order of {first.id} and {second.id} "
            f"is acyclic") from exc


class PlannerInterface:
    """Anything that can turn a feedback prompt into a revised plan."""

    def repair(self, prompt: FeedbackPrompt) -> TaskPlan:
        raise NotImplementedError


class DeterministicPlanner(PlannerInterface):
    """Rule-based repairer; the loop's testing oracle."""

    def repair(self, prompt: FeedbackPrompt) -> TaskPlan:
        return deterministic_repair(prompt.plan, prompt.violation)


def _chat_completion(base_url: str, model: str, api_key: Optional[str],
                     timeout: float, transport, system: str, user: str) -> str:
    url = base_url.rstrip("/") + CHAT_COMPLETIONS_PATH
    headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
    body = {"model": model,
            "messages": [{"role": "system", "content": system},
                         {"role": "user", "content": user}]}
    try:
        with httpx.Client(transport=transport, timeout=timeout) as client:
            response = client.post(url, json=body, headers=headers)
    except httpx.HTTPError as exc:
        raise TransportError(f"chat-completion request failed: {exc}") from exc
    if response.status_code != 200:
        raise TransportError(
            f"chat-completion endpoint returned HTTP {response.status_code}")
    try:
        content = response.json()["choices"][0]["message"]["content"]
    except (ValueError, LookupError, TypeError) as exc:
        raise TransportError("malformed chat-completion envelope") from exc
    if not isinstance(content, str):
        raise TransportError("chat-completion content is not text")
    return content


class LlmPlanner(PlannerInterface):
    """Planner backed by a chat-completion endpoint.

    The reply must be one JSON object matching OUTPUT_SCHEMA.  Validation is
    strict: unknown or missing task ids, malformed predecessor lists, absent
    change_reason, and cyclic proposals are all SchemaError.
    """

    def __init__(self, base_url: str, model: str, api_key: Optional[str] = None,
                 timeout: float = 30.0, transport=None):
        self.base_url = base_url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.transport = transport

    @classmethod
    def from_env(cls, transport=None, timeout: float = 30.0) -> "LlmPlanner":
        base_url = os.environ.get(ENV_BASE_URL)
        if not base_url:
            raise PlannerError(f"{ENV_BASE_URL} is not set")
        model = os.environ.get(ENV_MODEL)
        if not model:
            raise PlannerError(f"{ENV_MODEL} is not set")
        return cls(base_url, model, api_key=os.environ.get(ENV_API_KEY),
                   transport=transport, timeout=timeout)

    def repair(self, prompt: FeedbackPrompt) -> TaskPlan:
        content = _chat_completion(
            self.base_url, self.model, self.api_key, self.timeout,
            self.transport, prompt.system_instructions, prompt.user_message())
        return apply_reply(prompt.plan, content)


def apply_reply(plan: TaskPlan, content: str) -> TaskPlan:
    """Parse and validate a planner reply against the output schema."""
    try:
        doc = json.loads(content)
    except ValueError as exc:
        raise SchemaError(f"planner reply is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("tasks"), list):
        raise SchemaError('planner reply must be {"tasks": [...]}')
    known = set(plan.tasks)
    seen = set()
    revised = {}
    for record in doc["tasks"]:
        if not isinstance(record, dict):
            raise SchemaError("each task entry must be an object")
        tid = record.get("id")
        if tid not in known:
            raise SchemaError(f"reply names unknown task id {tid!r}")
        if tid in seen:
            raise SchemaError(f"reply repeats task id {tid!r}")
        seen.add(tid)
        preds = record.get("predecessors")
        if not isinstance(preds, list) or not all(isinstance(p, str) for p in preds):
            raise SchemaError(f"task {tid!r}: predecessors must be a list of ids")
        bad = sorted(set(preds) - known)
        if bad:
            raise SchemaError(f"task {tid!r}: unknown predecessors {bad}")
        reason = record.get("change_reason")
        if not isinstance(reason, str) or not reason.strip():
            raise SchemaError(f"task {tid!r}: change_reason is required")
        revised[tid] = dataclasses.replace(
            plan.tasks[tid], predecessors=tuple(sorted(set(preds))))
    missing = sorted(known - seen)
    if missing:
        raise SchemaError(f"reply drops tasks {missing}; the task set must be preserved")
    try:
        return build_plan(revised.values(), plan_id=plan.plan_id,
                          product_requirement=plan.product_requirement)
    except PlanError as exc:
        raise SchemaError(f"proposed plan rejected: {exc}") from exc


# --- the bounded repair loop ---------------------------------------------------


@dataclass
class HistoryEntry:
    attempt: int
    plan: TaskPlan
    report: Optional[VerificationReport]
    prompt: Optional[FeedbackPrompt]
    error: Optional[PlannerError] = None


@dataclass
class RepairOutcome:
    final_plan: TaskPlan
    final_report: VerificationReport
    attempts: int
    history: List[HistoryEntry]
    converged: bool


def repair_loop(plan: TaskPlan, constraints: Iterable[StructuredConstraint],
                planner: PlannerInterface, max_attempts: int = 5,
                *, resources: Optional[ResourceSet] = None,
                state_budget: int = DEFAULT_STATE_BUDGET,
                multi_violation: bool = False,
                initial_report: Optional[VerificationReport] = None) -> RepairOutcome:
    """Verify, feed back the first violation, replan, repeat.

    Stops at a safe verdict or after max_attempts planner calls.  Planner
    errors (bad replies, unrepairable violations) consume their attempt and
    are recorded in history; the previous plan carries forward.  An already
    safe plan converges with zero attempts.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    pairs = [(c, translate_structured(c)) for c in constraints]
    ctx = execution_context(plan, resources)
    current = plan
    report = initial_report if initial_report is not None else validate_safety(
        current.automaton(), pairs, state_budget=state_budget)
    history: List[HistoryEntry] = []
    if report.verdict == SAFE:
        return RepairOutcome(final_plan=current, final_report=report,
                             attempts=0, history=history, converged=True)
    for attempt in range(1, max_attempts + 1):
        worst = report.violations[0]
        extra = report.violations[1:] if multi_violation else ()
        prompt = build_feedback(current, worst, ctx, extra=extra)
        try:
            proposal = planner.repair(prompt)
        except PlannerError as exc:
            exc.attempt = attempt
            history.append(HistoryEntry(attempt=attempt, plan=current,
                                        report=report, prompt=prompt, error=exc))
            continue
        current = proposal
        report = validate_safety(current.automaton(), pairs,
                                 state_budget=state_budget)
        history.append(HistoryEntry(attempt=attempt, plan=current,
                                    report=report, prompt=prompt))
        if report.verdict == SAFE:
            return RepairOutcome(final_plan=current, final_report=report,
                                 attempts=attempt, history=history,
                                 converged=True)
    return RepairOutcome(final_plan=current, final_report=report,
                         attempts=max_attempts, history=history,
                         converged=False)


# --- natural-language requirement translation ----------------------------------


_ORDERING_RE = re.compile(
    r"^\s*([\w.-]+)\s+must\s+occur\s+before\s+([\w.-]+?)\s*[.!]?\s*$",
    re.IGNORECASE)
_MUTEX_RE = re.compile(
    r"^\s*([\w.-]+)\s+and\s+([\w.-]+)\s+must\s+not\s+occur\s+"
    r"(?:simultaneously|at\s+the\s+same\s+time)\s*[.!]?\s*$",
    re.IGNORECASE)


class RuleBasedTranslator:
    """Pattern matcher turning requirement sentences into constraint records.

    Names are resolved against the plan when one is given: a task id becomes
    that task's exact event proposition, anything else becomes a function
    wildcard.  Unmatched sentences raise UnrecognizedRequirement so nothing
    ever slips through silently.
    """

    def __init__(self, plan: Optional[TaskPlan] = None):
        self.plan = plan
        self._counter = 0

    def _find_task(self, name: str) -> Optional[Task]:
        if self.plan is None:
            return None
        lowered = name.lower()
        for tid, task in self.plan.tasks.items():
            if tid.lower() == lowered:
                return task
        return None

    def _event_ap(self, name: str) -> AtomicProposition:
        task = self._find_task(name)
        if task is not None:
            return start_ap(task)
        return parse_ap(f"ap/*/*/*/start({name.lower()})/*")

    def _level_ap(self, name: str) -> AtomicProposition:
        task = self._find_task(name)
        if task is not None:
            return executing_ap(task)
        return parse_ap(f"ap/*/*/*/executing({name.lower()})/*")

    def translate(self, requirement_text: str,
                  constraint_id: Optional[str] = None) -> StructuredConstraint:
        self._counter += 1
        cid = constraint_id or f"req_{self._counter}"
        m = _ORDERING_RE.match(requirement_text)
        if m:
            return StructuredConstraint(
                id=cid, constraint_type=ORDERING,
                first=self._event_ap(m.group(1)),
                second=self._event_ap(m.group(2)),
                source_text=requirement_text.strip())
        m = _MUTEX_RE.match(requirement_text)
        if m:
            return StructuredConstraint(
                id=cid, constraint_type=MUTUAL_EXCLUSION,
                first=self._level_ap(m.group(1)),
                second=self._level_ap(m.group(2)),
                source_text=requirement_text.strip())
        raise UnrecognizedRequirement(
            f"no translation rule matches {requirement_text!r}")


TRANSLATOR_INSTRUCTIONS = (
    "Map the manufacturing safety requirement to one JSON object: "
    '{"type": "ordering" | "mutual_exclusion", "first": "<proposition>", '
    '"second": "<proposition>"}. Propositions use the form '
    "ap/process/product/resource/event/context with * as wildcard. "
    "Reply with the JSON object only."
)


class LlmTranslator:
    """Requirement translation delegated to a chat-completion endpoint."""

    def __init__(self, base_url: str, model: str, api_key: Optional[str] = None,
                 timeout: float = 30.0, transport=None):
        self.base_url = base_url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.transport = transport
        self._counter = 0

    def translate(self, requirement_text: str,
                  constraint_id: Optional[str] = None) -> StructuredConstraint:
        self._counter += 1
        cid = constraint_id or f"req_{self._counter}"
        content = _chat_completion(
            self.base_url, self.model, self.api_key, self.timeout,
            self.transport, TRANSLATOR_INSTRUCTIONS, requirement_text)
        try:
            doc = json.loads(content)
        except ValueError as exc:
            raise SchemaError(f"translator reply is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise SchemaError("translator reply must be a JSON object")
        ctype = doc.get("type")
        if ctype not in (ORDERING, MUTUAL_EXCLUSION):
            raise SchemaError(f"translator reply has unknown type {ctype!r}")
        aps = []
        for text in (doc.get("first"), doc.get("second")):
            if not isinstance(text, str):
                raise SchemaError("translator reply needs first and second propositions")
            try:
                aps.append(parse_ap(text))
            except MalformedAp as exc:
                raise SchemaError(f"translator proposed a bad proposition: {exc}") from exc
        return StructuredConstraint(
            id=cid, constraint_type=ctype, first=aps[0], second=aps[1],
            source_text=requirement_text.strip())
