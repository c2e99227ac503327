from dataclasses import replace

import pytest

from btsynth.core import Atom, NodeKind, action, condition, fallback, iter_paths, node_count, sequence, validate
from btsynth.planner import (
    AchieverOrder,
    PlannerConfig,
    PlanningError,
    expand_condition,
    plan_bt,
    static_facts_of,
    static_predicates,
)
from btsynth.simulator import Simulator
from btsynth.world import Disturbance, SemanticError, enumerate_reachable, parse_domain

A = Atom.parse

CYCLE = """
(domain cyc (objects)
  (predicates (a 0) (b 0))
  (action make (params) (pre (a)) (add (a) (b)) (dur 1) (pfail 0.0)))
"""
CYCLE = CYCLE.replace("(add (a) (b))", "(add (a))")


def plan(domain, scenario, depth=PlannerConfig().max_expansion_depth):
    return plan_bt(domain, scenario.goal, PlannerConfig(depth), static_facts_of(domain, scenario.init))


class TestExpand:
    def test_no_achiever(self, fetch):
        assert expand_condition(fetch[0], A("item_at(cube1,loc1)")) == condition("item_at(cube1,loc1)")

    def test_fetch_depth_one(self, fetch):
        t = expand_condition(fetch[0], A("delivered(cube1)"), cfg=PlannerConfig(1))
        assert t == fallback(
            condition("delivered(cube1)"),
            sequence(condition("holding(cube1)"), condition("robot_at(delivery)"), action("place(cube1)")),
        )
        assert node_count(t) == 6

    def test_fetch_depth_two_shape(self, fetch):
        t = expand_condition(fetch[0], A("delivered(cube1)"), cfg=PlannerConfig(2))
        place_branch = t.children[1]
        holding, at_delivery, place = place_branch.children
        assert place == action("place(cube1)")
        assert holding.children[0] == condition("holding(cube1)")
        assert [b.children[-1].atom for b in holding.children[1:]] == [
            A("pick(cube1,cube1)"), A("pick(cube1,loc1)"), A("pick(cube1,delivery)")
        ]
        # the never-added item_at guard is checked before anything is pursued
        assert holding.children[2].children[0] == condition("item_at(cube1,loc1)")
        assert at_delivery.children[0] == condition("robot_at(delivery)")
        assert len(at_delivery.children) == 4
        assert node_count(t) == 32

    def test_cycle_left_unexpanded(self):
        d = parse_domain(CYCLE)
        assert expand_condition(d, A("a()")) == fallback(condition("a()"), sequence(condition("a()"), action("make()")))

    def test_fewest_preconditions_order(self):
        d = parse_domain(
            """(domain o (objects) (predicates (g 0) (p 0) (q 0))
                 (action slow (params) (pre (p) (q)) (add (g)))
                 (action fast (params) (pre (p)) (add (g))))"""
        )
        by_decl = expand_condition(d, A("g()"))
        by_pre = expand_condition(d, A("g()"), cfg=PlannerConfig(achiever_order=AchieverOrder.FEWEST_PRECONDITIONS))
        assert [b.children[-1].atom.name for b in by_decl.children[1:]] == ["slow", "fast"]
        assert [b.children[-1].atom.name for b in by_pre.children[1:]] == ["fast", "slow"]

    def test_static_pruning(self, stack3):
        d, s = stack3
        assert static_predicates(d) == {"block", "is_table", "neq"}
        pruned = expand_condition(d, A("on(b,a)"), cfg=PlannerConfig(1), static_facts=static_facts_of(d, s.init))
        assert [str(br.children[-1].atom) for br in pruned.children[1:]] == ["stack(b,table,a)"]
        full = expand_condition(d, A("on(b,a)"), cfg=PlannerConfig(1))
        # stack(b,?,a) and unstack(b,?,a) for each of the four objects
        assert len(full.children) == 1 + 8


class TestPlan:
    def test_single_goal_is_bare(self, fetch):
        d, s = fetch
        assert plan(d, s).kind is NodeKind.FALLBACK

    def test_conjunction_in_lexicographic_order(self, stack3):
        t = plan(*stack3)
        assert t.kind is NodeKind.SEQUENCE
        assert [c.children[0].atom for c in t.children] == [A("on(a,table)"), A("on(b,a)"), A("on(c,b)")]

    def test_errors(self, fetch):
        with pytest.raises(PlanningError):
            plan_bt(fetch[0], [])
        with pytest.raises(SemanticError):
            plan_bt(fetch[0], [A("holding(cube9)")])

    def test_deterministic(self, stack3):
        assert plan(*stack3) == plan(*stack3)

    def test_default_depth(self):
        assert PlannerConfig().max_expansion_depth == 4
        with pytest.raises(ValueError):
            PlannerConfig(0)

    def test_unachievable_goal_fails(self, fetch):
        d, s = fetch
        goal = frozenset({A("delivered(cube1)"), A("item_at(cube1,delivery)")})
        t = plan_bt(d, goal)
        r = Simulator(d).run(t, replace(s, goal=goal, max_ticks=30), 0)
        assert not r.success

    @pytest.mark.parametrize("suite", ["fetch", "stack3"])
    def test_structure(self, suite, request):
        d, s = request.getfixturevalue(suite)
        tree = plan(d, s)
        assert validate(tree) == []
        ground = Simulator(d).ground
        for path, node in iter_paths(tree):
            if node.kind is not NodeKind.ACTION:
                continue
            parent = tree
            for i in path[:-1]:
                parent = parent.children[i]
            assert parent.kind is NodeKind.SEQUENCE
            checked = set()
            for sib in parent.children[: path[-1]]:
                checked.add(sib.atom if sib.kind is NodeKind.CONDITION else sib.children[0].atom)
            assert set(ground[node.atom].pre) <= checked


@pytest.mark.parametrize("suite", ["fetch", "stack3"])
def test_sound_from_every_reachable_state(suite, request):
    d, s = request.getfixturevalue(suite)
    tree = plan(d, s)
    sim = Simulator(d)
    states = enumerate_reachable(d, s.init, 10_000)
    failures = [st for st in states if not sim.run(tree, replace(s, init=st), 0).success]
    assert failures == []


@pytest.mark.parametrize("suite", ["fetch", "stack3"])
def test_reactive_to_single_non_goal_deletion(suite, request):
    """Delete one non-goal fact at one tick before the goal is reached."""
    d, s = request.getfixturevalue(suite)
    tree = plan(d, s)
    sim = Simulator(d)
    base = sim.run(tree, s, 0)
    facts = set(s.init)
    for st in enumerate_reachable(d, s.init, 10_000):
        facts |= st
    failures = []
    for tick in range(1, base.ticks_used + 1):
        for fact in sorted(facts - s.goal):
            dist = Disturbance(tick, dele=frozenset({fact}))
            r = sim.run(tree, replace(s, disturbances=(dist,)), 0, checked=True)
            if not r.success:
                failures.append((tick, str(fact)))
    assert failures == []


@pytest.mark.parametrize("suite, some_recoverable", [("fetch", False), ("stack3", True)])
def test_recovers_whenever_goal_still_reachable(suite, some_recoverable, request):
    """The same deletions, judged against what any policy could still do.

    A deletion that leaves the goal reachable by some action sequence must be
    repaired by the tree; the others cannot be repaired by anything. In
    FETCH every fact is load-bearing before the goal, so none qualify there.
    """
    from episodes import goal_reachable, state_before_tick

    d, s = request.getfixturevalue(suite)
    tree = plan(d, s)
    sim = Simulator(d)
    base = sim.run(tree, s, 0)
    recoverable = 0
    for tick in range(1, base.ticks_used + 1):
        state = state_before_tick(sim, tree, s, tick)
        for fact in sorted(state - s.goal):
            if not goal_reachable(d, state - {fact}, s.goal):
                continue
            recoverable += 1
            dist = Disturbance(tick, dele=frozenset({fact}))
            assert sim.run(tree, replace(s, disturbances=(dist,)), 0, checked=True).success, (tick, fact)
    assert (recoverable > 0) == some_recoverable
