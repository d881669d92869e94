import itertools

import pytest

from planverify.ap_model import (
    AtomicProposition,
    GroundEvent,
    matches,
    matches_level,
    parse_ap,
    valuation,
)
from planverify.errors import MalformedAp
from planverify.plan_model import done_event, start_ap, start_event

from conftest import make_plan, make_task


def test_parse_paper_example_defaults_to_start():
    ap = parse_ap("ap/assembly/part_A/robotarm1/pick_part/printerX")
    assert ap.process == "assembly"
    assert ap.product == "part_a"
    assert ap.resource == "robotarm1"
    assert ap.kind == "start"
    assert ap.function == "pick_part"
    assert ap.context == "printerx"


def test_parse_round_trips_to_canonical_form():
    ap = parse_ap("ap/Assembly/SG/xarm6/done(move_loaded)/Assembly_Board")
    assert ap.kind == "done"
    assert ap.text == "ap/assembly/sg/xarm6/done(move_loaded)/assembly_board"
    assert parse_ap(ap.text) == ap


def test_parse_full_wildcard_matches_start_and_done():
    ap = parse_ap("ap/*/*/*/*/*")
    ev_start = GroundEvent("T", "start", "f", "p", "x", "r", "c")
    ev_done = GroundEvent("T", "done", "f", "p", "x", "r", "c")
    assert matches(ap, ev_start)
    assert matches(ap, ev_done)


def test_parse_explicit_descriptors():
    assert parse_ap("ap/a/b/c/start(f)/d").kind == "start"
    assert parse_ap("ap/a/b/c/executing(f)/d").kind == "executing"
    assert parse_ap("ap/a/b/c/start(*)/d").function == "*"


@pytest.mark.parametrize("bad", [
    "",
    "   ",
    "ap/a/b/c/d",                      # five fields
    "ap/a/b/c/d/e/f",                  # seven fields
    "xx/a/b/c/start(f)/d",             # wrong prefix
    "ap//b/c/start(f)/d",              # empty field
    "ap/a/b/c/begin(f)/d",             # unknown descriptor kind
    "ap/a/b/c/start(f/d",              # unbalanced parens
])
def test_parse_rejects_malformed(bad):
    with pytest.raises(MalformedAp):
        parse_ap(bad)


def test_constructor_validates_fields():
    with pytest.raises(MalformedAp):
        AtomicProposition("a", "", "c", "start", "f", "d")
    with pytest.raises(MalformedAp):
        AtomicProposition("a", "b", "c", "begin", "f", "d")
    # a wildcard kind with a concrete function is ambiguous
    with pytest.raises(MalformedAp):
        AtomicProposition("a", "b", "c", "*", "f", "d")


def test_matches_table_i_move_event():
    ap = parse_ap("ap/*/SG/*/start(move_loaded)/*")
    ev = GroundEvent("SG_MOVE", "start", "move_loaded",
                     "assembly", "sg", "xarm6", "assembly_board")
    assert matches(ap, ev)
    assert not matches(ap, GroundEvent("SG_MOVE", "done", "move_loaded",
                                       "assembly", "sg", "xarm6", "assembly_board"))


def test_matches_field_mismatch():
    ap = parse_ap("ap/*/*/xarm6/start(move_loaded)/*")
    ev = GroundEvent("T", "start", "move_loaded", "assembly", "sg", "ur5e", "x")
    assert not matches(ap, ev)


def test_matches_is_case_insensitive():
    ap = parse_ap("ap/*/SG/*/start(Move_Loaded)/*")
    ev = GroundEvent("T", "start", "MOVE_LOADED", "assembly", "Sg", "ur5e", "x")
    assert matches(ap, ev)


def test_executing_pattern_never_matches_a_pulse():
    ap = parse_ap("ap/*/*/*/executing(move_loaded)/*")
    ev = GroundEvent("T", "start", "move_loaded", "a", "b", "c", "d")
    assert not matches(ap, ev)
    assert matches_level(ap, ev)


def test_matches_reflexive_on_ground_patterns():
    """A wildcard-free AP built from an event matches that event."""
    task = make_task("SG_MOVE", function="move_loaded", part="sg",
                     resource="xarm6", dest="assembly_board")
    ev = start_event(task)
    assert matches(start_ap(task), ev)


def test_valuation_initial_state_has_no_pulses():
    plan = make_plan(make_task("A"), make_task("B"))
    auto = plan.automaton()
    alphabet = [start_ap(plan.tasks["A"]), start_ap(plan.tasks["B"])]
    assert valuation(plan, auto.initial, None, alphabet) == frozenset()


def test_valuation_pulse_after_start():
    plan = make_plan(make_task("A"), make_task("B"))
    auto = plan.automaton()
    ap_a = start_ap(plan.tasks["A"])
    ev = start_event(plan.tasks["A"])
    state = auto.apply(auto.initial, ev)
    assert valuation(plan, state, ev, [ap_a]) == frozenset([ap_a])
    # the pulse decays on the very next step
    ev_b = start_event(plan.tasks["B"])
    state2 = auto.apply(state, ev_b)
    assert valuation(plan, state2, ev_b, [ap_a]) == frozenset()


def test_valuation_levels_while_both_running():
    plan = make_plan(make_task("C", resource="arm1"),
                     make_task("D", resource="arm2"))
    auto = plan.automaton()
    ex_c = parse_ap("ap/*/c/*/executing(move_loaded)/*")
    ex_d = parse_ap("ap/*/d/*/executing(move_loaded)/*")
    s = auto.apply(auto.initial, start_event(plan.tasks["C"]))
    ev = start_event(plan.tasks["D"])
    s = auto.apply(s, ev)
    assert valuation(plan, s, ev, [ex_c, ex_d]) == frozenset([ex_c, ex_d])
    # after C finishes only D's level remains
    ev2 = done_event(plan.tasks["C"])
    s = auto.apply(s, ev2)
    assert valuation(plan, s, ev2, [ex_c, ex_d]) == frozenset([ex_d])


def _all_traces(plan):
    auto = plan.automaton()

    def walk(state, prefix):
        pairs = auto.enabled_indices(state)
        if not pairs:
            yield prefix
            return
        for kind, idx in pairs:
            task = plan.tasks[auto.order[idx]]
            ev = start_event(task) if kind == "start" else done_event(task)
            yield from walk(auto.apply(state, ev), prefix + (ev,))

    yield from walk(auto.initial, ())


def test_pulse_exclusivity_exhaustive():
    """Each start/done AP holds at most once along any maximal trace."""
    plan = make_plan(
        make_task("A", resource="r1"),
        make_task("B", resource="r1", predecessors=("A",)),
        make_task("C", resource="r2"),
    )
    auto = plan.automaton()
    aps = [start_ap(plan.tasks[t]) for t in plan.tasks]
    for trace in _all_traces(plan):
        state = auto.initial
        counts = dict.fromkeys(aps, 0)
        for ev in trace:
            state = auto.apply(state, ev)
            for ap in valuation(plan, state, ev, aps):
                counts[ap] += 1
        assert all(n <= 1 for n in counts.values())
