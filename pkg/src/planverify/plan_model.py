"""Task plans as DAGs and their interleaving execution semantics.

A plan state assigns each task one of pending/running/done.  A task may
start when it is pending, every predecessor is done and no other task is
running on its resource; a running task may finish at any time.  Every
maximal run therefore fires exactly one start and one done per task
(2*|tasks| events), and the reachable state graph is finite and acyclic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import yaml

from .ap_model import DONE as EV_DONE
from .ap_model import START as EV_START
from .ap_model import WILDCARD, AtomicProposition, EXECUTING, GroundEvent
from .errors import (CapabilityMismatch, CyclicPlan, DanglingPredecessor,
                     EventNotEnabled, PlanError, StateBudgetExceeded,
                     UnknownResource)

PENDING = 0
RUNNING = 1
DONE = 2
STATUS_NAMES = ("pending", "running", "done")

DEFAULT_STATE_BUDGET = 5_000_000


@dataclass(frozen=True)
class Task:
    """One unit of work bound to a resource; precedence via predecessor ids."""

    id: str
    function: str
    part: str = ""
    resource: str = ""
    process: str = ""
    source_context: str = ""
    dest_context: str = ""
    predecessors: tuple = ()

    @property
    def event_context(self) -> str:
        """The single context string this task's events carry (dest wins)."""
        return self.dest_context or self.source_context


@dataclass(frozen=True)
class Resource:
    id: str
    capabilities: frozenset = frozenset()
    label: str = ""


@dataclass
class ResourceSet:
    resources: dict

    def __contains__(self, resource_id):
        return resource_id in self.resources

    def get(self, resource_id):
        return self.resources.get(resource_id)


@dataclass(frozen=True, slots=True)
class PlanState:
    """Immutable status vector aligned with the plan's sorted task order."""

    codes: tuple

    def as_dict(self, plan: "TaskPlan") -> dict:
        order = plan.task_order
        return {tid: STATUS_NAMES[c] for tid, c in zip(order, self.codes)}


@dataclass
class TaskPlan:
    """A validated task DAG."""

    tasks: dict
    plan_id: str = "plan"
    product_requirement: str = ""
    _automaton: object = field(default=None, compare=False, repr=False)

    @property
    def task_order(self) -> tuple:
        return self.automaton().order

    @property
    def edges(self) -> frozenset:
        return frozenset((pred, t.id) for t in self.tasks.values()
                         for pred in t.predecessors)

    def automaton(self) -> "PlanAutomaton":
        if self._automaton is None:
            self._automaton = PlanAutomaton(self)
        return self._automaton

    def with_edge(self, pred_id: str, succ_id: str) -> "TaskPlan":
        """A new validated plan with one extra precedence edge."""
        if pred_id not in self.tasks or succ_id not in self.tasks:
            raise DanglingPredecessor(f"unknown task in edge {pred_id} -> {succ_id}")
        succ = self.tasks[succ_id]
        if pred_id in succ.predecessors:
            return self
        tasks = dict(self.tasks)
        tasks[succ_id] = Task(
            id=succ.id, function=succ.function, part=succ.part,
            resource=succ.resource, process=succ.process,
            source_context=succ.source_context, dest_context=succ.dest_context,
            predecessors=tuple(sorted((*succ.predecessors, pred_id))))
        return build_plan(tasks.values(), plan_id=self.plan_id,
                          product_requirement=self.product_requirement)

    def to_document(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "product_requirement": self.product_requirement,
            "tasks": [
                {
                    "id": t.id,
                    "function": t.function,
                    "part": t.part,
                    "resource_jid": t.resource,
                    "process": t.process,
                    "source": t.source_context,
                    "dest": t.dest_context,
                    "predecessors": sorted(t.predecessors),
                }
                for t in (self.tasks[tid] for tid in sorted(self.tasks))
            ],
        }


# --- events and propositions derived from tasks ------------------------------


def start_event(task: Task) -> GroundEvent:
    return GroundEvent(task_id=task.id, kind=EV_START, function=task.function,
                       process=task.process, product=task.part,
                       resource=task.resource, context=task.event_context)


def done_event(task: Task) -> GroundEvent:
    return GroundEvent(task_id=task.id, kind=EV_DONE, function=task.function,
                       process=task.process, product=task.part,
                       resource=task.resource, context=task.event_context)


def _ap_field(value: str) -> str:
    return value if value else WILDCARD


def _task_ap(task: Task, kind: str) -> AtomicProposition:
    return AtomicProposition(
        process=_ap_field(task.process), product=_ap_field(task.part),
        resource=_ap_field(task.resource), kind=kind,
        function=_ap_field(task.function), context=_ap_field(task.event_context))


def start_ap(task: Task) -> AtomicProposition:
    """Ground pulse proposition for this task's start transition."""
    return _task_ap(task, EV_START)


def done_ap(task: Task) -> AtomicProposition:
    return _task_ap(task, EV_DONE)


def executing_ap(task: Task) -> AtomicProposition:
    """Ground level proposition holding while this task runs."""
    return _task_ap(task, EXECUTING)


# --- validation and parsing ---------------------------------------------------


def build_plan(tasks: Iterable[Task], plan_id: str = "plan",
               product_requirement: str = "",
               resources: Optional[ResourceSet] = None) -> TaskPlan:
    """Validate task records into a TaskPlan; raises on any structural flaw."""
    table = {}
    for task in tasks:
        if task.id in table:
            raise PlanError(f"duplicate task id {task.id!r}")
        table[task.id] = task
    for task in table.values():
        for pred in task.predecessors:
            if pred not in table:
                raise DanglingPredecessor(
                    f"task {task.id!r} lists unknown predecessor {pred!r}")
    cycle = _find_cycle(table)
    if cycle:
        raise CyclicPlan("precedence cycle: " + " -> ".join(cycle))
    if resources is not None:
        for task in table.values():
            holder = resources.get(task.resource)
            if holder is None:
                raise UnknownResource(
                    f"task {task.id!r} uses unknown resource {task.resource!r}")
            if task.function not in holder.capabilities:
                raise CapabilityMismatch(
                    f"resource {task.resource!r} cannot perform "
                    f"{task.function!r} (task {task.id!r})")
    return TaskPlan(tasks=table, plan_id=plan_id,
                    product_requirement=product_requirement)


def _find_cycle(table: dict) -> Optional[list]:
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {tid: WHITE for tid in table}
    parent = {}
    for root in sorted(table):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(table[root].predecessors)))]
        color[root] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    # unwind the gray path to print one concrete cycle
                    cycle = [nxt, node]
                    cur = node
                    while cur != nxt:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = node
                    stack.append((nxt, iter(sorted(table[nxt].predecessors))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def parse_task_record(record: dict, index: int = 0) -> Task:
    if not isinstance(record, dict):
        raise PlanError(f"task record {index} is not a mapping")
    tid = record.get("id")
    function = record.get("function")
    if not tid or not function:
        raise PlanError(f"task record {index} needs 'id' and 'function'")
    preds = record.get("predecessors") or []
    if not isinstance(preds, list):
        raise PlanError(f"task {tid!r}: predecessors must be a list")
    return Task(
        id=str(tid), function=str(function),
        part=str(record.get("part") or ""),
        resource=str(record.get("resource_jid") or record.get("resource") or ""),
        process=str(record.get("process") or ""),
        source_context=str(record.get("source") or ""),
        dest_context=str(record.get("dest") or ""),
        predecessors=tuple(sorted(str(p) for p in preds)))


def parse_plan(document: dict,
               resources: Optional[ResourceSet] = None) -> TaskPlan:
    """Parse a plan document (already JSON/YAML-decoded) and validate it."""
    if not isinstance(document, dict):
        raise PlanError("plan document must be a mapping")
    raw_tasks = document.get("tasks")
    if not isinstance(raw_tasks, list):
        raise PlanError("plan document needs a 'tasks' list")
    tasks = [parse_task_record(r, i) for i, r in enumerate(raw_tasks)]
    return build_plan(
        tasks,
        plan_id=str(document.get("plan_id") or "plan"),
        product_requirement=str(document.get("product_requirement") or ""),
        resources=resources)


def parse_resources(document) -> ResourceSet:
    if isinstance(document, dict):
        document = document.get("resources")
    if not isinstance(document, list):
        raise PlanError("resource document must list resource records")
    table = {}
    for i, record in enumerate(document):
        rid = record.get("id")
        if not rid:
            raise PlanError(f"resource record {i} needs an 'id'")
        if rid in table:
            raise PlanError(f"duplicate resource id {rid!r}")
        caps = record.get("capabilities") or []
        table[str(rid)] = Resource(id=str(rid),
                                   capabilities=frozenset(str(c) for c in caps),
                                   label=str(record.get("label") or ""))
    return ResourceSet(resources=table)


def _load_document(path):
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        return yaml.safe_load(text)
    return json.loads(text)


def load_plan(path, resources: Optional[ResourceSet] = None) -> TaskPlan:
    return parse_plan(_load_document(path), resources)


def load_resources(path) -> ResourceSet:
    return parse_resources(_load_document(path))


# --- execution semantics ------------------------------------------------------


class PlanAutomaton:
    """Lazy transition system over plan states with precomputed task indexing."""

    def __init__(self, plan: TaskPlan):
        self.plan = plan
        self.order = tuple(sorted(plan.tasks))
        self.index = {tid: i for i, tid in enumerate(self.order)}
        self.tasks = tuple(plan.tasks[tid] for tid in self.order)
        self.pred_idx = tuple(
            tuple(self.index[p] for p in task.predecessors) for task in self.tasks)
        resource_ids = sorted({task.resource for task in self.tasks})
        res_index = {rid: i for i, rid in enumerate(resource_ids)}
        self.task_resource = tuple(res_index[task.resource] for task in self.tasks)
        groups = [[] for _ in resource_ids]
        for i, task in enumerate(self.tasks):
            groups[self.task_resource[i]].append(i)
        self.resource_group = tuple(tuple(g) for g in groups)
        self.start_events = tuple(start_event(t) for t in self.tasks)
        self.done_events = tuple(done_event(t) for t in self.tasks)
        self.initial = PlanState(codes=(PENDING,) * len(self.tasks))

    def is_marked(self, state: PlanState) -> bool:
        return all(c == DONE for c in state.codes)

    def _start_enabled(self, codes, i) -> bool:
        if codes[i] != PENDING:
            return False
        if any(codes[j] != DONE for j in self.pred_idx[i]):
            return False
        return all(codes[j] != RUNNING
                   for j in self.resource_group[self.task_resource[i]])

    def enabled_pairs(self, codes):
        """(kind, task index) pairs, starts before dones, each by task id."""
        out = [(EV_START, i) for i in range(len(codes)) if self._start_enabled(codes, i)]
        out.extend((EV_DONE, i) for i, c in enumerate(codes) if c == RUNNING)
        return out

    def enabled_indices(self, state: PlanState):
        return self.enabled_pairs(state.codes)

    def enabled(self, state: PlanState):
        return [self.start_events[i] if kind == EV_START else self.done_events[i]
                for kind, i in self.enabled_indices(state)]

    def fire(self, state: PlanState, kind: str, i: int) -> PlanState:
        codes = list(state.codes)
        codes[i] = RUNNING if kind == EV_START else DONE
        return PlanState(codes=tuple(codes))

    def apply(self, state: PlanState, event: GroundEvent) -> PlanState:
        i = self.index.get(event.task_id)
        if i is None:
            raise EventNotEnabled(f"unknown task {event.task_id!r}")
        if event.kind == EV_START:
            if not self._start_enabled(state.codes, i):
                raise EventNotEnabled(f"{event.label} is not enabled")
        elif event.kind == EV_DONE:
            if state.codes[i] != RUNNING:
                raise EventNotEnabled(f"{event.label} is not enabled")
        else:
            raise EventNotEnabled(f"unknown event kind {event.kind!r}")
        return self.fire(state, event.kind, i)

    def successors(self, state: PlanState):
        return [(self.start_events[i] if kind == EV_START else self.done_events[i],
                 self.fire(state, kind, i))
                for kind, i in self.enabled_indices(state)]

    def count_states(self, budget: int = DEFAULT_STATE_BUDGET) -> int:
        seen = {self.initial.codes}
        frontier = [self.initial]
        while frontier:
            state = frontier.pop()
            for _, nxt in self.successors(state):
                if nxt.codes not in seen:
                    seen.add(nxt.codes)
                    if len(seen) > budget:
                        raise StateBudgetExceeded(
                            f"plan state count exceeds budget {budget}",
                            explored=len(seen))
                    frontier.append(nxt)
        return len(seen)


def enabled_events(state: PlanState, plan: TaskPlan):
    """Enabled ground events, deterministically ordered (kind, task id)."""
    return plan.automaton().enabled(state)


def apply_event(plan: TaskPlan, state: PlanState, event: GroundEvent) -> PlanState:
    """Successor state after firing one enabled event; EventNotEnabled otherwise."""
    return plan.automaton().apply(state, event)


def initial_state(plan: TaskPlan) -> PlanState:
    return plan.automaton().initial


def running_start_events(plan: TaskPlan, state: PlanState):
    """Static event descriptors of the tasks running in this state."""
    auto = plan.automaton()
    return [auto.start_events[i] for i, c in enumerate(state.codes) if c == RUNNING]


def state_count(plan: TaskPlan, budget: int = DEFAULT_STATE_BUDGET) -> int:
    """Exact reachable-state count (explicit materialization)."""
    return plan.automaton().count_states(budget)


def reaches(plan: TaskPlan, src: str, dst: str) -> bool:
    """True when dst is reachable from src along precedence edges."""
    succ = {}
    for pred, s in plan.edges:
        succ.setdefault(pred, []).append(s)
    stack = [src]
    seen = set()
    while stack:
        cur = stack.pop()
        if cur == dst:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(succ.get(cur, ()))
    return False
