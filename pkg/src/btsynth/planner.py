"""Backward-chained behavior trees from goals and action models.

Each condition becomes a fallback that first checks the condition and then
tries every action able to make it true; each such action sits in a sequence
after the (recursively expanded) checks of its own preconditions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

from .core import Atom, BtNode, action, condition, ensure_valid, fallback, sequence
from .world import Domain, GroundAction, achievers


class AchieverOrder(enum.Enum):
    DECLARATION = "declaration"
    FEWEST_PRECONDITIONS = "fewest_preconditions"


@dataclass(frozen=True)
class PlannerConfig:
    max_expansion_depth: int = 4
    achiever_order: AchieverOrder = AchieverOrder.DECLARATION

    def __post_init__(self) -> None:
        if self.max_expansion_depth < 1:
            raise ValueError("max_expansion_depth must be >= 1")


class PlanningError(ValueError):
    pass


def _ordered_achievers(domain: Domain, atom: Atom, cfg: PlannerConfig) -> list[GroundAction]:
    found = achievers(domain, atom)
    if cfg.achiever_order is AchieverOrder.FEWEST_PRECONDITIONS:
        found.sort(key=lambda g: len(set(g.pre)))  # stable: ties keep declaration order
    return found


def _branch_preconditions(domain: Domain, g: GroundAction) -> list[Atom]:
    """Preconditions of ``g`` with unachievable ones moved to the front.

    A condition nothing can establish is a pure guard. Checking it first
    stops the tree from pursuing the achievable preconditions of a branch
    that can never fire, which otherwise makes sibling branches undo each
    other's work tick after tick.
    """
    pre: list[Atom] = []
    for p in g.pre:
        if p not in pre:
            pre.append(p)
    guards = [p for p in pre if not achievers(domain, p)]
    rest = [p for p in pre if p not in guards]
    return guards + rest


def static_predicates(domain: Domain) -> frozenset[str]:
    """Predicates that no action adds or deletes, on success or failure."""
    changed = set()
    for t in domain.actions:
        for group in (t.add, t.dele, t.fail_add, t.fail_del):
            changed.update(a.name for a in group)
    return frozenset(n for n, _ in domain.predicates if n not in changed)


def _dead(g: GroundAction, statics: frozenset[str], static_facts) -> bool:
    if static_facts is None:
        return False
    return any(p.name in statics and p not in static_facts for p in g.pre)


def expand_condition(
    domain: Domain,
    atom: Atom,
    visited: frozenset[Atom] = frozenset(),
    cfg: PlannerConfig = PlannerConfig(),
    static_facts: frozenset[Atom] | None = None,
    _depth: int = 0,
) -> BtNode:
    """Backward-chain one condition.

    With ``static_facts`` (the true facts of every predicate no action
    changes) achievers guarded by a false static fact are left out: they can
    never run in any state the domain can reach.
    """
    statics = static_predicates(domain) if static_facts is not None else frozenset()
    return _expand(domain, atom, visited, cfg, statics, static_facts, _depth)


def _expand(domain, atom, visited, cfg, statics, static_facts, depth) -> BtNode:
    if atom in visited or depth >= cfg.max_expansion_depth:
        return condition(atom)
    found = [g for g in _ordered_achievers(domain, atom, cfg) if not _dead(g, statics, static_facts)]
    if not found:
        return condition(atom)
    inner = visited | {atom}
    branches = []
    for g in found:
        checks = [
            _expand(domain, p, inner, cfg, statics, static_facts, depth + 1)
            for p in _branch_preconditions(domain, g)
        ]
        branches.append(sequence(*checks, action(g.atom)))
    return fallback(condition(atom), *branches)


def static_facts_of(domain: Domain, state: Iterable[Atom]) -> frozenset[Atom]:
    statics = static_predicates(domain)
    return frozenset(a for a in state if a.name in statics)


def plan_bt(
    domain: Domain,
    goal: Iterable[Atom],
    cfg: PlannerConfig = PlannerConfig(),
    static_facts: Iterable[Atom] | None = None,
) -> BtNode:
    goal = sorted(set(goal))
    if not goal:
        raise PlanningError("cannot plan for an empty goal")
    for a in goal:
        domain.check_ground(a)
    if static_facts is not None:
        static_facts = frozenset(static_facts)
    parts = [expand_condition(domain, a, frozenset(), cfg, static_facts) for a in goal]
    tree = parts[0] if len(parts) == 1 else sequence(*parts)
    return ensure_valid(tree)
