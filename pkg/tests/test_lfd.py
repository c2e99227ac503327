from dataclasses import replace

import pytest

from btsynth.core import Atom, validate
from btsynth.lfd import LearningError, demos_to_bt, infer_action_models, infer_goal
from btsynth.planner import PlannerConfig, plan_bt, static_facts_of
from btsynth.simulator import Simulator
from btsynth.world import DemoTrace, TraceStep, apply, parse_trace

A = Atom.parse


def atoms(*texts):
    return frozenset(A(t) for t in texts)


def lifted(group):
    return {str(a) for a in group}


def demo_from_episode(sim, tree, scenario, seed=0):
    """Record the successful actions of one episode as a demonstration."""
    state, steps = scenario.init, []
    for e in sim.run(tree, scenario, seed).trace:
        if e.event == "action_succeeded":
            g = sim.ground[A(e.detail)]
            after = apply(state, g.add, g.dele)
            steps.append(TraceStep(state, g.atom, after))
            state = after
    return DemoTrace("recorded", tuple(steps))


PICK_STEP = TraceStep(
    atoms("robot_at(loc1)", "item_at(cube1,loc1)", "hand_empty()"),
    A("pick(cube1,loc1)"),
    atoms("robot_at(loc1)", "holding(cube1)"),
)


class TestActionModels:
    def test_single_pick(self):
        d = infer_action_models([DemoTrace("t", (PICK_STEP,))])
        pick = d.action("pick")
        assert pick.params == ("?p0", "?p1")
        assert lifted(pick.pre) == {"robot_at(?p1)", "item_at(?p0,?p1)", "hand_empty()"}
        assert lifted(pick.add) == {"holding(?p0)"}
        assert lifted(pick.dele) == {"item_at(?p0,?p1)", "hand_empty()"}
        assert pick.duration == 1 and pick.p_fail == 0
        assert d.objects == ("cube1", "loc1")

    def test_incidental_facts_intersected_away(self):
        t1 = parse_trace("(trace t1 (step (pre (p a) (noise a)) (act (m a)) (post (q a) (noise a))))")
        t2 = parse_trace("(trace t2 (step (pre (p b) (other b)) (act (m b)) (post (q b) (other b))))")
        m = infer_action_models([t1, t2]).action("m")
        assert lifted(m.pre) == {"p(?p0)"}
        assert lifted(m.add) == {"q(?p0)"}

    def test_foreign_constants(self):
        t = parse_trace(
            "(trace t (step (pre (holding c) (at depot)) (act (place c)) (post (done c) (at depot) (flag depot))))"
        )
        m = infer_action_models([t]).action("place")
        assert lifted(m.pre) == {"holding(?p0)", "at(depot)"}
        assert lifted(m.add) == {"done(?p0)"}  # flag(depot) is not parameter-relative

    def test_errors(self):
        with pytest.raises(LearningError):
            infer_action_models([])
        t = parse_trace("(trace t (step (pre) (act (m a)) (post (p a))) (step (pre (p a)) (act (m a b)) (post (p a))))")
        with pytest.raises(LearningError, match="arguments"):
            infer_action_models([t])

    def test_stack3_models_match_truth(self, demos, stack3):
        learned = infer_action_models(demos)
        true = stack3[0]
        assert [a.name for a in learned.actions] == ["unstack", "stack"]
        for tmpl in learned.actions:
            real = true.action(tmpl.name)
            rename = dict(zip(real.params, tmpl.params))

            def norm(group):
                return {Atom(a.name, tuple(rename.get(x, x) for x in a.args)) for a in group}

            assert set(tmpl.add) == norm(real.add)
            assert set(tmpl.dele) == norm(real.dele)
            assert norm(real.pre) <= set(tmpl.pre)

    def test_more_demos_never_enlarge(self, demos):
        few = infer_action_models(demos[:1])
        many = infer_action_models(demos)
        for tmpl in many.actions:
            other = few.action(tmpl.name)
            assert set(tmpl.pre) <= set(other.pre)
            assert set(tmpl.add) <= set(other.add)
            assert set(tmpl.dele) <= set(other.dele)


class TestGoal:
    def test_single_trace(self):
        t = DemoTrace("t", (TraceStep(atoms("holding(cube1)"), A("place(cube1)"), atoms("delivered(cube1)")),))
        assert infer_goal([t]) == atoms("delivered(cube1)")

    def test_nothing_changes(self):
        t = DemoTrace("t", (TraceStep(atoms("p()"), A("noop()"), atoms("p()")),))
        assert infer_goal([t]) == frozenset()
        with pytest.raises(LearningError, match="no goal"):
            demos_to_bt([t])

    def test_stack3(self, demos):
        assert infer_goal(demos) == atoms("on(a,table)", "on(b,a)", "on(c,b)")


class TestDemosToBt:
    def test_valid_tree(self, demos):
        assert validate(demos_to_bt(demos, PlannerConfig(2))) == []

    def test_fetch_demo_matches_planned_tree(self, fetch):
        d, s = fetch
        sim = Simulator(d)
        planned = plan_bt(d, s.goal, PlannerConfig(), static_facts_of(d, s.init))
        demo = demo_from_episode(sim, planned, s)
        learned_tree = demos_to_bt([demo])
        assert sim.run(learned_tree, s, 0).trace == sim.run(planned, s, 0).trace

    def test_missing_effect_surfaces(self, fetch):
        d, s = fetch
        sim = Simulator(d)
        planned = plan_bt(d, s.goal, PlannerConfig(), static_facts_of(d, s.init))
        demo = demo_from_episode(sim, planned, s)
        # drop hand_empty from the recorded placement: the learned place no longer frees the hand
        last = demo.steps[-1]
        broken = replace(last, after=last.after - {A("hand_empty()")})
        learned = infer_action_models([DemoTrace("t", demo.steps[:-1] + (broken,))])
        assert A("hand_empty()") not in learned.action("place").add
