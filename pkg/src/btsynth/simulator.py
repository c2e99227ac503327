"""Discrete-tick episode runner.

The simulator is the :class:`~btsynth.core.TickSink` for a symbolic world:
conditions are fact lookups, actions are ground STRIPS actions that take
``duration`` ticks after the tick that starts them and fail with probability
``p_fail`` (drawn once, when they start).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .core import Atom, BtNode, NodeKind, Status, TickSession, ensure_valid, iter_paths
from .rng import RngStream
from .world import Domain, GroundAction, Scenario, apply, entails, ground_actions

EVENTS = (
    "action_started",
    "action_succeeded",
    "action_failed",
    "action_halted",
    "disturbance_applied",
    "goal_reached",
    "goal_lost",
)


class SimulationError(ValueError):
    pass


@dataclass
class RunningAction:
    action: GroundAction
    ticks_remaining: int
    failure_predrawn: bool


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    event: str
    detail: str = ""


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    ticks_used: int
    goal_fraction_end: Fraction
    trace: tuple[TraceEvent, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "ticks_used": self.ticks_used,
            "goal_fraction_end": str(self.goal_fraction_end),
            "trace": [[e.tick, e.event, e.detail] for e in self.trace],
        }

    def to_text(self) -> str:
        lines = [
            f"success: {'yes' if self.success else 'no'}",
            f"ticks_used: {self.ticks_used}",
            f"goal_fraction_end: {self.goal_fraction_end}",
        ]
        lines += [f"  {e.tick:>5} {e.event} {e.detail}".rstrip() for e in self.trace]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class _WorldSink:
    """TickSink over one episode's mutable state."""

    def __init__(self, sim: "Simulator", state: frozenset[Atom], rng: RngStream, log):
        self.sim = sim
        self.state = state
        self.rng = rng
        self.log = log
        self.tick = 0
        self.running: dict[Atom, RunningAction] = {}

    def evaluate_condition(self, atom: Atom) -> Status:
        return Status.SUCCESS if atom in self.state else Status.FAILURE

    def tick_action(self, atom: Atom) -> Status:
        ra = self.running.get(atom)
        if ra is None:
            g = self.sim.ground[atom]
            if not entails(self.state, g.pre):
                return Status.FAILURE
            failed = self.rng.uniform() < g.p_fail
            self.running[atom] = RunningAction(g, g.duration, failed)
            self.log(self.tick, "action_started", str(atom))
            return Status.RUNNING
        ra.ticks_remaining -= 1
        if ra.ticks_remaining > 0:
            return Status.RUNNING
        del self.running[atom]
        g = ra.action
        if ra.failure_predrawn:
            self.state = apply(self.state, g.fail_add, g.fail_del)
            self.log(self.tick, "action_failed", str(atom))
            return Status.FAILURE
        self.state = apply(self.state, g.add, g.dele)
        self.log(self.tick, "action_succeeded", str(atom))
        return Status.SUCCESS

    def halt_action(self, atom: Atom) -> None:
        if self.running.pop(atom, None) is not None:
            self.log(self.tick, "action_halted", str(atom))


class Simulator:
    """A domain with its ground actions indexed, reusable across episodes."""

    def __init__(self, domain: Domain):
        self.domain = domain
        self.ground = {g.atom: g for g in ground_actions(domain)}
        self._arity = domain.arity

    def check_tree(self, tree: BtNode) -> None:
        ensure_valid(tree)
        objects = set(self.domain.objects)
        for _, node in iter_paths(tree):
            if node.kind is NodeKind.ACTION:
                if node.atom not in self.ground:
                    raise SimulationError(f"unknown action {node.atom}")
            elif node.kind is NodeKind.CONDITION:
                a = node.atom
                if self._arity.get(a.name) != len(a.args) or not objects.issuperset(a.args):
                    raise SimulationError(f"unknown condition {a}")

    def run(self, tree: BtNode, scenario: Scenario, seed: int, *, checked: bool = False) -> EpisodeResult:
        if not checked:
            self.check_tree(tree)
        events: list[TraceEvent] = []
        goal = scenario.goal
        goal_flag = [entails(scenario.init, goal)]

        def log(tick: int, event: str, detail: str = "") -> None:
            events.append(TraceEvent(tick, event, detail))

        sink = _WorldSink(self, scenario.init, RngStream(seed), log)

        def note_goal(tick: int) -> None:
            now = entails(sink.state, goal)
            if now != goal_flag[0]:
                log(tick, "goal_reached" if now else "goal_lost")
                goal_flag[0] = now

        if goal_flag[0]:
            log(0, "goal_reached")
        pending = {d.tick: d for d in scenario.disturbances}
        last_disturbance = max(pending, default=0)
        session = TickSession(tree, sink)
        success = False
        tick = 0
        for tick in range(1, scenario.max_ticks + 1):
            sink.tick = tick
            d = pending.get(tick)
            if d is not None:
                sink.state = apply(sink.state, d.add, d.dele)
                log(tick, "disturbance_applied")
                note_goal(tick)
            before = len(events)
            session.tick()
            if len(events) != before:
                note_goal(tick)
            if goal_flag[0] and tick >= last_disturbance:
                success = True
                break
        state = sink.state
        if goal:
            frac = Fraction(sum(1 for a in goal if a in state), len(goal))
        else:
            frac = Fraction(1)
        return EpisodeResult(success, tick, frac, tuple(events))


def run_episode(tree: BtNode, domain: Domain, scenario: Scenario, seed: int) -> EpisodeResult:
    return Simulator(domain).run(tree, scenario, seed)


def estimate_success_rate(
    tree: BtNode, domain: Domain, scenario: Scenario, base_seed: int, episodes: int
) -> Fraction:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    sim = Simulator(domain)
    sim.check_tree(tree)
    wins = sum(sim.run(tree, scenario, base_seed + i, checked=True).success for i in range(episodes))
    return Fraction(wins, episodes)
