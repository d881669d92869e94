"""Structured atomic propositions and ground task-execution events.

Propositions use the canonical textual form

    ap/<process>/<product>/<resource>/<event>/<context>

where ``<event>`` is ``start(<function>)``, ``done(<function>)`` or
``executing(<function>)`` and any field may be the wildcard ``*``.  A bare
function name in the event position is shorthand for ``start(<name>)``; a
bare ``*`` matches start and done events alike.

``start``/``done`` propositions are pulses: they hold only in the valuation
of the step immediately following the matching transition.  ``executing``
propositions are levels: they hold in every valuation computed while a
matching task is running.  Levels are what make simultaneity constraints
non-vacuous under interleaving, where no two pulses ever share a step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional

from .errors import MalformedAp

if TYPE_CHECKING:
    from .plan_model import PlanState, TaskPlan

WILDCARD = "*"

START = "start"
DONE = "done"
EXECUTING = "executing"
_EVENT_KINDS = (START, DONE, EXECUTING)

_DESCRIPTOR_RE = re.compile(r"([a-z_]+)\((.+)\)")


@dataclass(frozen=True, slots=True)
class AtomicProposition:
    """One structured event pattern; all fields canonical (lowercased)."""

    process: str
    product: str
    resource: str
    kind: str
    function: str
    context: str

    def __post_init__(self):
        for name in ("process", "product", "resource", "function", "context"):
            value = getattr(self, name)
            if not value:
                raise MalformedAp(f"empty {name!r} field in atomic proposition")
            object.__setattr__(self, name, value.lower())
        if self.kind not in _EVENT_KINDS and self.kind != WILDCARD:
            raise MalformedAp(f"unknown event descriptor kind {self.kind!r}")
        if self.kind == WILDCARD and self.function != WILDCARD:
            raise MalformedAp("wildcard event kind requires a wildcard function")

    @property
    def event_text(self) -> str:
        if self.kind == WILDCARD:
            return WILDCARD
        return f"{self.kind}({self.function})"

    @property
    def text(self) -> str:
        return (f"ap/{self.process}/{self.product}/{self.resource}/"
                f"{self.event_text}/{self.context}")

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True, slots=True)
class GroundEvent:
    """One concrete start or done transition taken by a plan."""

    task_id: str
    kind: str  # start | done
    function: str
    process: str
    product: str
    resource: str
    context: str

    @property
    def label(self) -> str:
        """Witness rendering, e.g. ``SG_MOVE.start``."""
        return f"{self.task_id}.{self.kind}"

    def __str__(self) -> str:
        return self.label


# A valuation is the subset of a constraint alphabet holding at one step.
Valuation = frozenset


def parse_ap(text: str) -> AtomicProposition:
    """Parse canonical AP text; raises MalformedAp on any shape problem.

    The result round-trips: ``parse_ap(x).text`` is the canonical lowercase
    form with an explicit event descriptor.
    """
    if not isinstance(text, str) or not text.strip():
        raise MalformedAp("empty proposition text")
    fields = text.strip().lower().split("/")
    if len(fields) != 6:
        raise MalformedAp(
            f"expected 6 slash-separated fields, got {len(fields)}: {text!r}")
    if fields[0] != "ap":
        raise MalformedAp(f"proposition must begin with 'ap': {text!r}")
    process, product, resource, event, context = fields[1:]
    for name, value in (("process", process), ("product", product),
                        ("resource", resource), ("event", event),
                        ("context", context)):
        if not value:
            raise MalformedAp(f"empty {name!r} field: {text!r}")
    kind, function = _parse_event_descriptor(event, text)
    return AtomicProposition(process, product, resource, kind, function, context)


def _parse_event_descriptor(event: str, original: str):
    if "(" in event or ")" in event:
        m = _DESCRIPTOR_RE.fullmatch(event)
        if m is None:
            raise MalformedAp(f"malformed event descriptor {event!r}: {original!r}")
        kind, function = m.group(1), m.group(2)
        if kind not in _EVENT_KINDS:
            raise MalformedAp(f"unknown event descriptor kind {kind!r}: {original!r}")
        return kind, function
    if event == WILDCARD:
        return WILDCARD, WILDCARD
    # bare function name is shorthand for start(<name>)
    return START, event


def _field_matches(pattern: str, value: str) -> bool:
    return pattern == WILDCARD or pattern == value.lower()


def matches(pattern: AtomicProposition, event: GroundEvent) -> bool:
    """Pulse matching: does this start/done event satisfy the pattern?

    ``executing`` patterns are levels, not pulses; they never match a
    GroundEvent (see matches_level).
    """
    if pattern.kind == EXECUTING:
        return False
    if pattern.kind != WILDCARD and pattern.kind != event.kind:
        return False
    return (_field_matches(pattern.function, event.function)
            and _field_matches(pattern.process, event.process)
            and _field_matches(pattern.product, event.product)
            and _field_matches(pattern.resource, event.resource)
            and _field_matches(pattern.context, event.context))


def matches_level(pattern: AtomicProposition, running: GroundEvent) -> bool:
    """Level matching of an ``executing`` pattern against a running task.

    ``running`` is the task's static event descriptor (its start event);
    only the non-kind fields participate.
    """
    if pattern.kind != EXECUTING:
        return False
    return (_field_matches(pattern.function, running.function)
            and _field_matches(pattern.process, running.process)
            and _field_matches(pattern.product, running.product)
            and _field_matches(pattern.resource, running.resource)
            and _field_matches(pattern.context, running.context))


def valuation(plan: "TaskPlan", state: "PlanState",
              incoming: Optional[GroundEvent],
              alphabet: Iterable[AtomicProposition]) -> Valuation:
    """The alphabet subset holding at ``state`` reached via ``incoming``.

    Pulses hold iff the incoming event matches; levels hold iff some task
    running in ``state`` matches.  ``incoming`` is None only for the initial
    state, where no pulse can hold.
    """
    from .plan_model import running_start_events

    true_aps = set()
    running = None
    for ap in alphabet:
        if ap.kind == EXECUTING:
            if running is None:
                running = running_start_events(plan, state)
            if any(matches_level(ap, ev) for ev in running):
                true_aps.add(ap)
        elif incoming is not None and matches(ap, incoming):
            true_aps.add(ap)
    return frozenset(true_aps)
