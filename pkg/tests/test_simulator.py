import json
from dataclasses import replace
from fractions import Fraction

import pytest

from btsynth.core import Atom, action, condition, fallback, sequence
from btsynth.planner import PlannerConfig, plan_bt, static_facts_of
from btsynth.simulator import SimulationError, Simulator, estimate_success_rate, run_episode
from btsynth.world import Disturbance, parse_domain, parse_scenario

A = Atom.parse

LAMP = """
(domain lamp (objects)
  (predicates (lit 0) (powered 0))
  (action switch (params) (pre (powered)) (add (lit)) (dur 3) (pfail 0.0)))
"""


@pytest.fixture
def lamp():
    d = parse_domain(LAMP)
    return d, parse_scenario("(scenario s (init (powered)) (goal (lit)) (maxticks 20))", d)


def planned(domain, scenario, depth=PlannerConfig().max_expansion_depth):
    return plan_bt(domain, scenario.goal, PlannerConfig(depth), static_facts_of(domain, scenario.init))


def events(result):
    return [(e.tick, e.event, e.detail) for e in result.trace]


class TestDurations:
    def test_single_action_takes_duration_plus_one_ticks(self, lamp):
        d, s = lamp
        r = run_episode(fallback(condition("lit()"), action("switch()")), d, s, 0)
        assert r.success and r.ticks_used == 4
        assert events(r) == [
            (1, "action_started", "switch()"),
            (4, "action_succeeded", "switch()"),
            (4, "goal_reached", ""),
        ]

    def test_fetch_depth2_tree(self, fetch):
        # pick 1..2, move(loc1,delivery) 2..4, place 4..5
        r = run_episode(planned(*fetch, depth=2), *fetch, seed=0)
        assert r.success and r.ticks_used == 5
        started = [e.detail for e in r.trace if e.event == "action_started"]
        assert started == ["pick(cube1,loc1)", "move(loc1,delivery)", "place(cube1)"]

    def test_fetch_default_tree(self, fetch):
        # declaration order prefers move(cube1,delivery), reached via cube1
        r = run_episode(planned(*fetch), *fetch, seed=0)
        assert r.success and r.ticks_used == 7
        started = [e.detail for e in r.trace if e.event == "action_started"]
        assert started == ["pick(cube1,loc1)", "move(loc1,cube1)", "move(cube1,delivery)", "place(cube1)"]
        assert r.goal_fraction_end == 1


class TestOutcomes:
    def test_empty_goal(self, fetch):
        s = replace(fetch[1], goal=frozenset())
        r = run_episode(condition("hand_empty()"), fetch[0], s, 0)
        assert r.success and r.ticks_used == 1 and r.goal_fraction_end == 1

    def test_goal_already_true_starts_nothing(self, fetch):
        s = replace(fetch[1], init=fetch[1].init | {A("delivered(cube1)")})
        r = run_episode(planned(*fetch), fetch[0], s, 0)
        assert r.success and r.ticks_used == 1
        assert not any(e.event == "action_started" for e in r.trace)

    def test_failure_runs_to_max_ticks(self, fetch):
        r = run_episode(condition("delivered(cube1)"), *fetch, seed=0)
        assert not r.success and r.ticks_used == 200 and r.goal_fraction_end == 0

    def test_partial_goal_fraction(self, stack3):
        d, s = stack3
        r = run_episode(action("stack(c,table,b)"), d, s, 0)
        assert r.goal_fraction_end == Fraction(2, 3)

    def test_precondition_failure_returns_failure(self, fetch):
        r = run_episode(action("place(cube1)"), *fetch, seed=0)
        assert not any(e.event == "action_started" for e in r.trace)

    def test_unknown_atoms_rejected_before_ticking(self, fetch):
        with pytest.raises(SimulationError, match="fly"):
            run_episode(action("fly(cube1)"), *fetch, seed=0)
        with pytest.raises(SimulationError, match="cube9"):
            run_episode(condition("holding(cube9)"), *fetch, seed=0)


class TestHalting:
    def test_halted_action_applies_no_effects(self):
        # switching would also power the lamp; lighting it externally preempts
        d = parse_domain(LAMP.replace("(add (lit))", "(add (lit) (powered))").replace("(pre (powered))", "(pre)"))
        s = parse_scenario("(scenario s (init) (goal (powered)) (disturb 2 (add (lit))) (maxticks 20))", d)
        r = Simulator(d).run(fallback(condition("lit()"), action("switch()")), s, 0)
        assert (2, "action_halted", "switch()") in events(r)
        assert not any(e.event == "action_succeeded" for e in r.trace)
        assert not r.success

    def test_preconditions_checked_only_at_start(self, lamp):
        d, s = lamp
        s = replace(s, disturbances=(Disturbance(2, dele=frozenset({A("powered()")})),))
        r = run_episode(sequence(action("switch()")), d, s, 0)
        assert r.success and r.ticks_used == 4


class TestDisturbances:
    def test_cube_removal_is_repaired(self, stack3):
        d, s = stack3
        tree = planned(d, s)
        first = run_episode(tree, d, s, 0)
        t = first.ticks_used + 3
        removal = Disturbance(
            t, add=frozenset({A("on(c,table)"), A("clear(b)")}), dele=frozenset({A("on(c,b)")})
        )
        r = run_episode(tree, d, replace(s, disturbances=(removal,)), 0)
        goal_events = [e.event for e in r.trace if e.event.startswith("goal")]
        assert goal_events == ["goal_reached", "goal_lost", "goal_reached"]
        assert r.success and r.ticks_used > t

    def test_waits_for_pending_disturbance(self, stack3):
        d, s = stack3
        tree = planned(d, s)
        noop = Disturbance(50, add=frozenset({A("clear(c)")}))
        r = run_episode(tree, d, replace(s, disturbances=(noop,)), 0)
        assert r.success and r.ticks_used == 50


class TestStochastic:
    def test_reproducible(self, fetch):
        d, s = fetch
        d = d.with_action(replace(d.action("pick"), p_fail=0.5))
        tree = planned(d, s)
        a = run_episode(tree, d, s, 17)
        b = run_episode(tree, d, s, 17)
        assert a == b and a.to_json() == b.to_json()

    def test_failures_logged_and_retried(self, fetch):
        d, s = fetch
        d = d.with_action(replace(d.action("pick"), p_fail=0.5))
        results = [run_episode(planned(d, s), d, s, seed) for seed in range(20)]
        assert any(e.event == "action_failed" for r in results for e in r.trace)

    def test_certain_failure(self, fetch):
        d, s = fetch
        d = d.with_action(replace(d.action("place"), p_fail=1.0))
        assert estimate_success_rate(planned(d, s), d, s, 0, 10) == 0

    def test_no_failures_rate_one(self, fetch):
        assert estimate_success_rate(planned(*fetch), *fetch, 0, 5) == 1

    def test_episodes_must_be_positive(self, fetch):
        with pytest.raises(ValueError):
            estimate_success_rate(planned(*fetch), *fetch, 0, 0)


class TestReport:
    def test_machine_document(self, fetch):
        r = run_episode(planned(*fetch), *fetch, seed=0)
        doc = json.loads(r.to_json())
        assert set(doc) == {"success", "ticks_used", "goal_fraction_end", "trace"}
        assert doc["goal_fraction_end"] == "1"

    def test_text_report(self, fetch):
        text = run_episode(planned(*fetch), *fetch, seed=0).to_text()
        assert text.startswith("success: yes\nticks_used: 7\n")
