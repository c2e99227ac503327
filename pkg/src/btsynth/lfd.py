"""Action models and goals from symbolic demonstrations.

A simplified reconstruction: every demonstrated action name becomes one
template whose parameters are its argument positions. Facts are lifted by
replacing an argument equal to the action's k-th argument with ``?pk``.

* add / del: intersection over all occurrences of the lifted state
  differences; a fact mentioning any other object is dropped.
* pre: intersection over all occurrences of the lifted pre-state. Objects
  that are not action arguments stay as constants, so a fact such as
  ``robot_at(delivery)`` survives as a precondition of ``place(?p0)`` when
  every demonstrated placement happened there.

Learned templates get duration 1 and never fail.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .core import Atom, BtNode
from .planner import PlannerConfig, plan_bt, static_facts_of
from .world import ActionTemplate, DemoTrace, Domain


class LearningError(ValueError):
    pass


def _var(k: int) -> str:
    return f"?p{k}"


def _lift(atom: Atom, args: Sequence[str]) -> Atom | None:
    """Lift ``atom`` over the action arguments, or None if it mentions others."""
    out = []
    for a in atom.args:
        if a not in args:
            return None
        out.append(_var(args.index(a)))
    return Atom(atom.name, tuple(out))


def _lift_keeping_constants(atom: Atom, args: Sequence[str]) -> Atom:
    return Atom(atom.name, tuple(_var(args.index(a)) if a in args else a for a in atom.args))


def _lift_all(atoms: Iterable[Atom], args: Sequence[str]) -> frozenset[Atom]:
    lifted = (_lift(a, args) for a in atoms)
    return frozenset(a for a in lifted if a is not None)


def _check(traces: Sequence[DemoTrace]) -> None:
    if not traces:
        raise LearningError("at least one demonstration trace is required")
    for t in traces:
        t.check_chain()


def infer_action_models(traces: Sequence[DemoTrace], name: str = "learned") -> Domain:
    _check(traces)
    order: list[str] = []
    arity: dict[str, int] = {}
    pre: dict[str, frozenset[Atom]] = {}
    add: dict[str, frozenset[Atom]] = {}
    dele: dict[str, frozenset[Atom]] = {}
    objects: set[str] = set()
    predicates: dict[str, int] = {}

    for trace in traces:
        for step in trace.steps:
            act = step.action
            for fact in step.before | step.after:
                objects.update(fact.args)
                if predicates.setdefault(fact.name, len(fact.args)) != len(fact.args):
                    raise LearningError(f"predicate {fact.name} used with two arities")
            objects.update(act.args)
            if act.name not in arity:
                arity[act.name] = len(act.args)
                order.append(act.name)
            elif arity[act.name] != len(act.args):
                raise LearningError(
                    f"action {act.name} seen with {arity[act.name]} and {len(act.args)} arguments"
                )
            p = frozenset(_lift_keeping_constants(f, act.args) for f in step.before)
            a = _lift_all(step.after - step.before, act.args)
            d = _lift_all(step.before - step.after, act.args)
            if act.name in pre:
                pre[act.name] &= p
                add[act.name] &= a
                dele[act.name] &= d
            else:
                pre[act.name], add[act.name], dele[act.name] = p, a, d

    templates = tuple(
        ActionTemplate(
            name=n,
            params=tuple(_var(k) for k in range(arity[n])),
            pre=tuple(sorted(pre[n])),
            add=tuple(sorted(add[n])),
            dele=tuple(sorted(dele[n])),
            duration=1,
            p_fail=0.0,
        )
        for n in order
    )
    return Domain(
        name=name,
        objects=tuple(sorted(objects)),
        predicates=tuple(sorted(predicates.items())),
        actions=templates,
    )


def infer_goal(traces: Sequence[DemoTrace]) -> frozenset[Atom]:
    """Facts true at the end of every demo but not true at the start of all."""
    _check(traces)
    finals = [t.steps[-1].after if t.steps else frozenset() for t in traces]
    initials = [t.steps[0].before if t.steps else frozenset() for t in traces]
    return frozenset.intersection(*finals) - frozenset.intersection(*initials)


def observed_static_facts(domain: Domain, traces: Sequence[DemoTrace]) -> frozenset[Atom]:
    """Facts of never-changing predicates, as seen in the demonstrations."""
    seen: set[Atom] = set()
    for t in traces:
        for s in t.steps:
            seen |= s.before | s.after
    return static_facts_of(domain, seen)


def demos_to_bt(traces: Sequence[DemoTrace], cfg: PlannerConfig = PlannerConfig()) -> BtNode:
    """Learn a domain and a goal, then plan a reactive tree for them."""
    goal = infer_goal(traces)
    if not goal:
        raise LearningError("no goal inferred: nothing became true in every demonstration")
    domain = infer_action_models(traces)
    return plan_bt(domain, goal, cfg, observed_static_facts(domain, traces))
