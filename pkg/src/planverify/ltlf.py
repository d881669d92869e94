"""Finite-trace temporal formulas over structured atomic propositions.

The verification core works on a canonical negation-normal form with the
connectives true/false/ap/!ap, & (n-ary set), | (n-ary set), X (next),
N (weak next), U (until) and R (release).  F, G and -> are accepted as
input sugar and removed by :func:`normalize`.

Two complementary evaluation routes live here on purpose:

* :func:`progress` + :func:`empty_accepts` is the stepwise engine: reading a
  valuation rewrites the formula to the obligation on the remaining trace,
  and a trace is accepted iff the formula left at the end accepts emptiness.
  Canonical formulas double as automaton states, so the rewrite *is* the
  transition function of the safety automaton.
* :func:`evaluate_trace` is a direct recursive evaluator over trace
  positions (quantifier semantics for U/R/F/G) used as an independent
  oracle by the test suite and the brute-force plan checker.

Both routes define satisfaction over possibly-empty suffixes: the empty
trace accepts N/R/G-shaped obligations and rejects pulses, X and U.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .ap_model import AtomicProposition, Valuation, parse_ap
from .errors import (AlphabetTooLarge, LtlfSyntaxError, MalformedAp,
                     TranslationError, UnknownProposition)

# --- abstract syntax --------------------------------------------------------


class Formula:
    """Base class; all nodes are immutable values with structural equality."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True, slots=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True, slots=True)
class Ap(Formula):
    ap: AtomicProposition


@dataclass(frozen=True, slots=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True, slots=True)
class And(Formula):
    children: frozenset


@dataclass(frozen=True, slots=True)
class Or(Formula):
    children: frozenset


@dataclass(frozen=True, slots=True)
class Next(Formula):
    child: Formula


@dataclass(frozen=True, slots=True)
class WeakNext(Formula):
    child: Formula


@dataclass(frozen=True, slots=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Release(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Eventually(Formula):
    child: Formula


@dataclass(frozen=True, slots=True)
class Globally(Formula):
    child: Formula


@dataclass(frozen=True, slots=True)
class Implies(Formula):
    left: Formula
    right: Formula


TRUE = TrueF()
FALSE = FalseF()


def collect_aps(f: Formula) -> frozenset:
    """Every atomic proposition occurring in the formula."""
    found = set()
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Ap):
            found.add(g.ap)
        elif isinstance(g, (Not, Next, WeakNext, Eventually, Globally)):
            stack.append(g.child)
        elif isinstance(g, (And, Or)):
            stack.extend(g.children)
        elif isinstance(g, (Until, Release, Implies)):
            stack.append(g.left)
            stack.append(g.right)
    return frozenset(found)


# --- canonical constructors -------------------------------------------------
#
# These fold constants, flatten nested conjunction/disjunction, deduplicate
# children, cancel complementary literals and apply absorption.  They assume
# already-canonical children and keep the result canonical, which is what
# makes structural equality usable as automaton-state identity.


def _complement_literal(f: Formula) -> Optional[Formula]:
    if isinstance(f, Ap):
        return Not(f)
    if isinstance(f, Not) and isinstance(f.child, Ap):
        return f.child
    return None


def conj(children: Iterable[Formula]) -> Formula:
    members = set()
    for c in children:
        if isinstance(c, FalseF):
            return FALSE
        if isinstance(c, TrueF):
            continue
        if isinstance(c, And):
            members.update(c.children)
        else:
            members.add(c)
    if FALSE in members:
        return FALSE
    members.discard(TRUE)
    for c in members:
        comp = _complement_literal(c)
        if comp is not None and comp in members:
            return FALSE
    for c in [m for m in members if isinstance(m, Or)]:
        if c.children & (members - {c}):
            members.discard(c)
    if not members:
        return TRUE
    if len(members) == 1:
        return next(iter(members))
    return And(frozenset(members))


def disj(children: Iterable[Formula]) -> Formula:
    members = set()
    for c in children:
        if isinstance(c, TrueF):
            return TRUE
        if isinstance(c, FalseF):
            continue
        if isinstance(c, Or):
            members.update(c.children)
        else:
            members.add(c)
    if TRUE in members:
        return TRUE
    members.discard(FALSE)
    for c in members:
        comp = _complement_literal(c)
        if comp is not None and comp in members:
            return TRUE
    for c in [m for m in members if isinstance(m, And)]:
        if c.children & (members - {c}):
            members.discard(c)
    if not members:
        return FALSE
    if len(members) == 1:
        return next(iter(members))
    return Or(frozenset(members))


def mk_next(child: Formula) -> Formula:
    # X false fails on every trace, empty or not
    return FALSE if isinstance(child, FalseF) else Next(child)


def mk_weak_next(child: Formula) -> Formula:
    return TRUE if isinstance(child, TrueF) else WeakNext(child)


def mk_until(left: Formula, right: Formula) -> Formula:
    # the right side can never be discharged
    return FALSE if isinstance(right, FalseF) else Until(left, right)


def mk_release(left: Formula, right: Formula) -> Formula:
    return TRUE if isinstance(right, TrueF) else Release(left, right)


# --- normalization ----------------------------------------------------------

_NORM_MEMO: dict = {}


def normalize(f: Formula) -> Formula:
    """Canonical negation normal form; idempotent; verdict-preserving.

    Removes F/G/-> sugar, pushes negation to literals, folds constants,
    flattens and deduplicates conjunction/disjunction and applies absorption.
    Simplification is structural only; no semantic minimization happens.
    """
    cached = _NORM_MEMO.get(f)
    if cached is None:
        cached = _NORM_MEMO[f] = _norm(f)
    return cached


def _norm(f: Formula) -> Formula:
    if isinstance(f, (TrueF, FalseF, Ap)):
        return f
    if isinstance(f, Not):
        return _norm_not(f.child)
    if isinstance(f, And):
        return conj(normalize(c) for c in f.children)
    if isinstance(f, Or):
        return disj(normalize(c) for c in f.children)
    if isinstance(f, Next):
        return mk_next(normalize(f.child))
    if isinstance(f, WeakNext):
        return mk_weak_next(normalize(f.child))
    if isinstance(f, Until):
        return mk_until(normalize(f.left), normalize(f.right))
    if isinstance(f, Release):
        return mk_release(normalize(f.left), normalize(f.right))
    if isinstance(f, Eventually):
        return mk_until(TRUE, normalize(f.child))
    if isinstance(f, Globally):
        return mk_release(FALSE, normalize(f.child))
    if isinstance(f, Implies):
        return disj([_norm_not(f.left), normalize(f.right)])
    raise TypeError(f"not a formula: {f!r}")


def _norm_not(g: Formula) -> Formula:
    """Normalized form of !g."""
    if isinstance(g, TrueF):
        return FALSE
    if isinstance(g, FalseF):
        return TRUE
    if isinstance(g, Ap):
        return Not(g)
    if isinstance(g, Not):
        return normalize(g.child)
    if isinstance(g, And):
        return disj(_norm_not(c) for c in g.children)
    if isinstance(g, Or):
        return conj(_norm_not(c) for c in g.children)
    # on possibly-empty suffixes X and N are each other's duals
    if isinstance(g, Next):
        return mk_weak_next(_norm_not(g.child))
    if isinstance(g, WeakNext):
        return mk_next(_norm_not(g.child))
    if isinstance(g, Until):
        return mk_release(_norm_not(g.left), _norm_not(g.right))
    if isinstance(g, Release):
        return mk_until(_norm_not(g.left), _norm_not(g.right))
    if isinstance(g, Eventually):
        return mk_release(FALSE, _norm_not(g.child))
    if isinstance(g, Globally):
        return mk_until(TRUE, _norm_not(g.child))
    if isinstance(g, Implies):
        return conj([normalize(g.left), _norm_not(g.right)])
    raise TypeError(f"not a formula: {g!r}")


# --- stepwise engine --------------------------------------------------------


def progress(f: Formula, val: Valuation) -> Formula:
    """Obligation left after reading one valuation; canonical in, canonical out.

    For every nonempty trace v.w:  v.w satisfies f  iff  w satisfies
    progress(f, v), where w may be empty.  The false constant is absorbing,
    which is exactly what makes it the violating automaton state.
    """
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Ap):
        return TRUE if f.ap in val else FALSE
    if isinstance(f, Not):
        if not isinstance(f.child, Ap):
            raise ValueError("progress requires canonical (NNF) input")
        return TRUE if f.child.ap not in val else FALSE
    if isinstance(f, And):
        return conj(progress(c, val) for c in f.children)
    if isinstance(f, Or):
        return disj(progress(c, val) for c in f.children)
    if isinstance(f, (Next, WeakNext)):
        return f.child
    if isinstance(f, Until):
        return disj([progress(f.right, val),
                     conj([progress(f.left, val), f])])
    if isinstance(f, Release):
        return conj([progress(f.right, val),
                     disj([progress(f.left, val), f])])
    raise ValueError(f"progress requires canonical input, got {type(f).__name__}")


def empty_accepts(f: Formula) -> bool:
    """Does the empty remaining trace satisfy this canonical formula?

    Pulses, X and U reject emptiness; N and R accept it; boolean structure
    is evaluated homomorphically.
    """
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Ap):
        return False
    if isinstance(f, Not):
        if not isinstance(f.child, Ap):
            raise ValueError("empty_accepts requires canonical (NNF) input")
        return True
    if isinstance(f, And):
        return all(empty_accepts(c) for c in f.children)
    if isinstance(f, Or):
        return any(empty_accepts(c) for c in f.children)
    if isinstance(f, Next):
        return False
    if isinstance(f, WeakNext):
        return True
    if isinstance(f, Until):
        return False
    if isinstance(f, Release):
        return True
    raise ValueError(f"empty_accepts requires canonical input, got {type(f).__name__}")


# --- independent trace oracle -----------------------------------------------


def evaluate_trace(f: Formula, trace) -> bool:
    """Direct recursive evaluation of f on a (possibly empty) valuation trace.

    Handles sugar natively and uses quantifier semantics for U/R/F/G, so it
    shares no rewriting machinery with progress().  Used as the oracle the
    engine is checked against.
    """
    vals = list(trace)
    n = len(vals)

    def ev(g: Formula, i: int) -> bool:
        if isinstance(g, TrueF):
            return True
        if isinstance(g, FalseF):
            return False
        if isinstance(g, Ap):
            return i < n and g.ap in vals[i]
        if isinstance(g, Not):
            return not ev(g.child, i)
        if isinstance(g, And):
            return all(ev(c, i) for c in g.children)
        if isinstance(g, Or):
            return any(ev(c, i) for c in g.children)
        if isinstance(g, Next):
            return False if i >= n else ev(g.child, i + 1)
        if isinstance(g, WeakNext):
            return True if i >= n else ev(g.child, i + 1)
        if isinstance(g, Until):
            return any(ev(g.right, j) and all(ev(g.left, k) for k in range(i, j))
                       for j in range(i, n))
        if isinstance(g, Release):
            return all(ev(g.right, j) or any(ev(g.left, k) for k in range(i, j))
                       for j in range(i, n))
        if isinstance(g, Eventually):
            return any(ev(g.child, j) for j in range(i, n))
        if isinstance(g, Globally):
            return all(ev(g.child, j) for j in range(i, n))
        if isinstance(g, Implies):
            return (not ev(g.left, i)) or ev(g.right, i)
        raise TypeError(f"not a formula: {g!r}")

    return ev(f, 0)


# --- pretty printing --------------------------------------------------------

_ATOM_PREC = 7
_UNARY_PREC = 5
_UNTIL_PREC = 4
_AND_PREC = 3
_OR_PREC = 2
_IMPLIES_PREC = 1

_RAW_MEMO: dict = {}


def _raw(f: Formula):
    cached = _RAW_MEMO.get(f)
    if cached is not None:
        return cached
    if isinstance(f, TrueF):
        out = ("true", _ATOM_PREC)
    elif isinstance(f, FalseF):
        out = ("false", _ATOM_PREC)
    elif isinstance(f, Ap):
        out = (f'"{f.ap.text}"', _ATOM_PREC)
    elif isinstance(f, Not):
        out = ("!" + _render(f.child, _UNARY_PREC), _UNARY_PREC)
    elif isinstance(f, Next):
        out = ("X " + _render(f.child, _UNARY_PREC), _UNARY_PREC)
    elif isinstance(f, WeakNext):
        out = ("N " + _render(f.child, _UNARY_PREC), _UNARY_PREC)
    elif isinstance(f, Eventually):
        out = ("F " + _render(f.child, _UNARY_PREC), _UNARY_PREC)
    elif isinstance(f, Globally):
        out = ("G " + _render(f.child, _UNARY_PREC), _UNARY_PREC)
    elif isinstance(f, Until):
        out = (f"{_render(f.left, _UNARY_PREC)} U {_render(f.right, _UNTIL_PREC)}",
               _UNTIL_PREC)
    elif isinstance(f, Release):
        out = (f"{_render(f.left, _UNARY_PREC)} R {_render(f.right, _UNTIL_PREC)}",
               _UNTIL_PREC)
    elif isinstance(f, And):
        parts = sorted(_render(c, _UNTIL_PREC) for c in f.children)
        out = (" & ".join(parts) if parts else "true", _AND_PREC)
    elif isinstance(f, Or):
        parts = sorted(_render(c, _AND_PREC) for c in f.children)
        out = (" | ".join(parts) if parts else "false", _OR_PREC)
    elif isinstance(f, Implies):
        out = (f"{_render(f.left, _OR_PREC)} -> {_render(f.right, _IMPLIES_PREC)}",
               _IMPLIES_PREC)
    else:
        raise TypeError(f"not a formula: {f!r}")
    _RAW_MEMO[f] = out
    return out


def _render(f: Formula, min_prec: int) -> str:
    text, prec = _raw(f)
    return f"({text})" if prec < min_prec else text


def pretty(f: Formula) -> str:
    """Deterministic textual form; reparses to a semantically equal formula."""
    return _render(f, 0)


Formula.__str__ = pretty  # type: ignore[assignment]


# --- parser -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<lparen>\()
      | (?P<rparen>\))
      | (?P<implies>->|→)
      | (?P<and>&|∧)
      | (?P<or>\||∨)
      | (?P<not>!|¬)
      | (?P<quoted>"[^"]*")
      | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_UNARY_WORDS = {"X": Next, "N": WeakNext, "F": Eventually, "G": Globally}
_BINARY_WORDS = ("U", "R")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LtlfSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens, bindings):
        self.tokens = tokens
        self.i = 0
        self.bindings = bindings

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.take()
        if tok[0] != kind:
            raise LtlfSyntaxError(
                f"expected {kind}, got {tok[1]!r}" if tok[0] != "eof"
                else "unexpected end of input", tok[2])
        return tok

    # precedence: unary > U,R > & > | > ->
    def parse_formula(self) -> Formula:
        f = self.parse_or()
        if self.peek()[0] == "implies":
            self.take()
            return Implies(f, self.parse_formula())
        return f

    def parse_or(self) -> Formula:
        parts = [self.parse_and()]
        while self.peek()[0] == "or":
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(frozenset(parts))

    def parse_and(self) -> Formula:
        parts = [self.parse_until()]
        while self.peek()[0] == "and":
            self.take()
            parts.append(self.parse_until())
        return parts[0] if len(parts) == 1 else And(frozenset(parts))

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        kind, text, _ = self.peek()
        if kind == "name" and text in _BINARY_WORDS:
            self.take()
            right = self.parse_until()  # right-associative
            return Until(left, right) if text == "U" else Release(left, right)
        return left

    def parse_unary(self) -> Formula:
        kind, text, pos = self.peek()
        if kind == "not":
            self.take()
            return Not(self.parse_unary())
        if kind == "name" and text in _UNARY_WORDS:
            self.take()
            return _UNARY_WORDS[text](self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Formula:
        kind, text, pos = self.take()
        if kind == "lparen":
            f = self.parse_formula()
            self.expect("rparen")
            return f
        if kind == "quoted":
            try:
                return Ap(parse_ap(text[1:-1]))
            except MalformedAp as exc:
                raise LtlfSyntaxError(f"bad proposition literal: {exc}", pos) from exc
        if kind == "name":
            lowered = text.lower()
            if lowered == "true":
                return TRUE
            if lowered == "false":
                return FALSE
            bound = self.bindings.get(text)
            if bound is None:
                raise UnknownProposition(f"unknown proposition {text!r}", pos)
            return Ap(bound)
        if kind == "eof":
            raise LtlfSyntaxError("unexpected end of input", pos)
        raise LtlfSyntaxError(f"unexpected token {text!r}", pos)


def parse_ltlf(text: str,
               bindings: Optional[Mapping[str, Union[AtomicProposition, str]]] = None
               ) -> Formula:
    """Parse formula text.

    Propositions appear either as double-quoted canonical AP literals or as
    names resolved through ``bindings`` (values may be AP objects or AP
    text).  ASCII and unicode connectives are both accepted.
    """
    resolved = {}
    for name, value in (bindings or {}).items():
        resolved[name] = value if isinstance(value, AtomicProposition) else parse_ap(value)
    parser = _Parser(_tokenize(text), resolved)
    f = parser.parse_formula()
    parser.expect("eof")
    return f


# --- structured constraints -------------------------------------------------

ORDERING = "ordering"
MUTUAL_EXCLUSION = "mutual_exclusion"
RAW_LTLF = "raw_ltlf"
CONSTRAINT_TYPES = (ORDERING, MUTUAL_EXCLUSION, RAW_LTLF)


@dataclass(frozen=True)
class StructuredConstraint:
    """One safety requirement in machine-checkable structured form."""

    id: str
    constraint_type: str
    first: Optional[AtomicProposition] = None
    second: Optional[AtomicProposition] = None
    raw: Optional[str] = None
    bindings: tuple = ()  # ((name, AtomicProposition), ...) for raw formulas
    source_text: str = ""


def _constraint_ap(c: StructuredConstraint, text) -> Ap:
    if isinstance(text, AtomicProposition):
        return Ap(text)
    try:
        return Ap(parse_ap(text))
    except MalformedAp as exc:
        raise TranslationError(f"constraint {c.id!r}: {exc}") from exc


def translate_structured(c: StructuredConstraint) -> Formula:
    """Constraint record to formula.

    ordering(a, b) becomes !b U a (strong until: a must actually occur);
    mutual_exclusion(a, b) becomes G !(a & b); raw_ltlf parses its text.
    """
    if c.constraint_type == ORDERING:
        if c.first is None or c.second is None:
            raise TranslationError(f"ordering constraint {c.id!r} needs first and second")
        return Until(Not(_constraint_ap(c, c.second)), _constraint_ap(c, c.first))
    if c.constraint_type == MUTUAL_EXCLUSION:
        if c.first is None or c.second is None:
            raise TranslationError(
                f"mutual_exclusion constraint {c.id!r} needs first and second")
        return Globally(Not(And(frozenset(
            (_constraint_ap(c, c.first), _constraint_ap(c, c.second))))))
    if c.constraint_type == RAW_LTLF:
        if not c.raw:
            raise TranslationError(f"raw_ltlf constraint {c.id!r} has no formula text")
        return parse_ltlf(c.raw, dict(c.bindings))
    raise TranslationError(f"unknown constraint type {c.constraint_type!r} ({c.id!r})")


def constraint_record(c: StructuredConstraint) -> dict:
    """Wire form of a constraint (inverse of parse_constraint_record)."""
    record = {"id": c.id, "type": c.constraint_type}
    if c.first is not None:
        record["first"] = str(c.first)
    if c.second is not None:
        record["second"] = str(c.second)
    if c.raw is not None:
        record["raw"] = c.raw
    if c.bindings:
        record["bindings"] = {name: ap.text for name, ap in c.bindings}
    if c.source_text:
        record["source_text"] = c.source_text
    return record


def parse_constraint_record(record: dict, index: int = 0) -> StructuredConstraint:
    if not isinstance(record, dict):
        raise TranslationError(f"constraint record {index} is not a mapping")
    ctype = record.get("type") or record.get("constraint_type")
    if ctype not in CONSTRAINT_TYPES:
        raise TranslationError(f"unknown constraint type {ctype!r} in record {index}")
    cid = str(record.get("id") or f"c{index}")
    first = record.get("first")
    second = record.get("second")
    bindings = tuple(sorted(
        (name, parse_ap(value)) for name, value in (record.get("bindings") or {}).items()))
    return StructuredConstraint(
        id=cid,
        constraint_type=ctype,
        first=parse_ap(first) if first else None,
        second=parse_ap(second) if second else None,
        raw=record.get("raw"),
        bindings=bindings,
        source_text=str(record.get("source_text") or ""),
    )


def parse_constraints(document) -> list:
    """Accepts a bare list of records or a {"constraints": [...]} wrapper."""
    if isinstance(document, dict):
        document = document.get("constraints")
    if not isinstance(document, list):
        raise TranslationError("constraint document must be a list of records")
    constraints = [parse_constraint_record(r, i) for i, r in enumerate(document)]
    seen = set()
    for c in constraints:
        if c.id in seen:
            raise TranslationError(f"duplicate constraint id {c.id!r}")
        seen.add(c.id)
    return constraints


def load_constraints(path) -> list:
    from .plan_model import _load_document  # shared JSON/YAML loader
    return parse_constraints(_load_document(path))


# --- explicit safety automaton ----------------------------------------------

DEFAULT_MAX_CLASSES = 2 ** 16


@dataclass
class SafetyAutomaton:
    """Explicit DFA over valuation classes of one constraint alphabet.

    States are ids into ``state_formula``; the violating states are exactly
    those whose formula is the false constant, and they are absorbing.
    """

    constraint_id: str
    alphabet: tuple
    states: tuple
    initial: int
    violating: frozenset
    accepting_at_end: frozenset
    transition: dict  # (state id, frozenset of alphabet APs) -> state id
    state_formula: dict

    def step(self, state: int, val: Valuation) -> int:
        key = (state, frozenset(ap for ap in val if ap in self._alphabet_set))
        hit = self.transition.get(key)
        if hit is not None:
            return hit
        # classes outside the precomputed table resolve by progression
        g = progress(self.state_formula[state], key[1])
        for sid, f in self.state_formula.items():
            if f == g:
                return sid
        raise KeyError(f"progressed to an unknown state from {state}")

    @property
    def _alphabet_set(self):
        return frozenset(self.alphabet)

    def run(self, trace) -> int:
        state = self.initial
        for val in trace:
            state = self.step(state, val)
        return state

    def accepts(self, trace) -> bool:
        """Whole-trace acceptance: never violate, and accept at the end."""
        state = self.initial
        for val in trace:
            state = self.step(state, val)
            if state in self.violating:
                return False
        return state in self.accepting_at_end


def compile_safety_automaton(f: Formula, alphabet: Iterable[AtomicProposition],
                             constraint_id: str = "",
                             max_classes: int = DEFAULT_MAX_CLASSES) -> SafetyAutomaton:
    """Build the explicit automaton by progression fixpoint over 2^|alphabet|.

    The initial state is the canonical formula; reading valuation class v
    from state q lands in progress(q, v).  Raises AlphabetTooLarge when the
    class count would exceed ``max_classes``.
    """
    aps = sorted(set(alphabet), key=lambda ap: ap.text)
    f0 = normalize(f)
    missing = collect_aps(f0) - set(aps)
    if missing:
        raise ValueError(
            "alphabet must cover the formula propositions; missing: "
            + ", ".join(sorted(ap.text for ap in missing)))
    if 2 ** len(aps) > max_classes:
        raise AlphabetTooLarge(
            f"{len(aps)} propositions give {2 ** len(aps)} valuation classes "
            f"(cap {max_classes})")
    classes = []
    for mask in range(2 ** len(aps)):
        classes.append(frozenset(ap for i, ap in enumerate(aps) if mask >> i & 1))

    ids = {f0: 0}
    formulas = [f0]
    transition = {}
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        g = formulas[sid]
        for cls in classes:
            h = progress(g, cls)
            tid = ids.get(h)
            if tid is None:
                tid = ids[h] = len(formulas)
                formulas.append(h)
                queue.append(tid)
            transition[(sid, cls)] = tid

    return SafetyAutomaton(
        constraint_id=constraint_id,
        alphabet=tuple(aps),
        states=tuple(range(len(formulas))),
        initial=0,
        violating=frozenset(i for i, g in enumerate(formulas) if g == FALSE),
        accepting_at_end=frozenset(i for i, g in enumerate(formulas) if empty_accepts(g)),
        transition=transition,
        state_formula=dict(enumerate(formulas)),
    )


def to_dot(a: SafetyAutomaton) -> str:
    """Graphviz rendering for human review; output is deterministic.

    Alphabet members are abbreviated p0, p1, ... with a legend in the graph
    label; violating states are filled, end-accepting states double-circled.
    """
    short = {ap: f"p{i}" for i, ap in enumerate(a.alphabet)}

    def class_label(cls):
        if not cls:
            return "{}"
        return "{" + ",".join(short[ap] for ap in sorted(cls, key=lambda x: x.text)) + "}"

    def esc(text):
        return text.replace("\\", "\\\\").replace('"', '\\"')

    lines = ["digraph safety_automaton {", "  rankdir=LR;"]
    title = [f"constraint: {a.constraint_id}" if a.constraint_id else "safety automaton"]
    for ap in a.alphabet:
        title.append(f"{short[ap]} = {ap.text}")
    lines.append(f'  label="{esc(chr(10).join(title))}";')
    lines.append("  labelloc=b;")
    lines.append('  node [fontname="Helvetica"];')
    lines.append("  init [shape=point];")
    for sid in a.states:
        attrs = []
        if sid in a.accepting_at_end:
            attrs.append("shape=doublecircle")
        else:
            attrs.append("shape=circle")
        if sid in a.violating:
            attrs.append("style=filled")
            attrs.append('fillcolor="#f6c6c6"')
        name = "q_v" if sid in a.violating else f"q{sid}"
        attrs.append(f'label="{esc(name + chr(10) + pretty(a.state_formula[sid]))}"')
        lines.append(f"  s{sid} [{', '.join(attrs)}];")
    lines.append(f"  init -> s{a.initial};")

    n_classes = 2 ** len(a.alphabet)
    grouped = {}
    for (src, cls), dst in a.transition.items():
        grouped.setdefault((src, dst), []).append(cls)
    for (src, dst) in sorted(grouped):
        classes = grouped[(src, dst)]
        if len(classes) == n_classes:
            label = "true"
        else:
            classes.sort(key=lambda cls: (len(cls), sorted(ap.text for ap in cls)))
            label = " | ".join(class_label(cls) for cls in classes)
        lines.append(f'  s{src} -> s{dst} [label="{esc(label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
