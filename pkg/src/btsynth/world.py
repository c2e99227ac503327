"""Symbolic STRIPS-like world model and its s-expression file formats.

Domains (``.dom``), scenarios (``.scn``) and demonstration traces (``.trc``)
share one s-expression syntax with ``;`` line comments.
"""

from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import IDENT_RE, Atom

_VAR_RE = re.compile(r"\?[a-z0-9_]+\Z")
_NUM_RE = re.compile(r"[0-9]+(\.[0-9]*)?([eE][-+]?[0-9]+)?\Z")

State = frozenset  # frozenset[Atom]


class WorldParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        self.message = message
        where = f"{line}:{column}: " if line else ""
        super().__init__(where + message)


class SemanticError(ValueError):
    """A well-formed file that references something the domain lacks."""


class TraceError(ValueError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


# --------------------------------------------------------------------------
# s-expressions


@dataclass(frozen=True)
class Tok:
    text: str
    line: int
    column: int


class SList(list):
    """A parenthesised list remembering where it opened."""

    line = 0
    column = 0


def read_sexprs(text: str) -> list:
    """Tokenise and nest ``text``; returns the list of top-level forms."""
    top: list = []
    stack: list[SList] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r\f\v":
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "(":
            lst = SList()
            lst.line, lst.column = line, col
            (stack[-1] if stack else top).append(lst)
            stack.append(lst)
            i += 1
            col += 1
            continue
        if ch == ")":
            if not stack:
                raise WorldParseError("unbalanced ')'", line, col)
            stack.pop()
            i += 1
            col += 1
            continue
        start, scol = i, col
        while i < n and text[i] not in " \t\r\n\f\v();":
            i += 1
            col += 1
        tok = Tok(text[start:i], line, scol)
        (stack[-1] if stack else top).append(tok)
    if stack:
        open_ = stack[-1]
        raise WorldParseError("unclosed '('", open_.line, open_.column)
    return top


def _where(node) -> tuple[int, int]:
    return (node.line, node.column)


def _expect_list(node, what: str) -> SList:
    if not isinstance(node, SList):
        raise WorldParseError(f"expected ({what} ...)", *_where(node))
    return node


def _expect_tok(node, what: str) -> Tok:
    if not isinstance(node, Tok):
        raise WorldParseError(f"expected {what}", *_where(node))
    return node


def _ident(node, what: str) -> str:
    tok = _expect_tok(node, what)
    if not IDENT_RE.match(tok.text):
        raise WorldParseError(f"bad {what} {tok.text!r}", tok.line, tok.column)
    return tok.text


def _head(node: SList) -> str:
    if not node or not isinstance(node[0], Tok):
        raise WorldParseError("expected a keyword after '('", node.line, node.column)
    return node[0].text


def _atom(node, allow_vars: bool) -> Atom:
    lst = _expect_list(node, "atom")
    name = _ident(lst[0], "predicate name") if lst else None
    if name is None:
        raise WorldParseError("empty atom", lst.line, lst.column)
    args = []
    for a in lst[1:]:
        tok = _expect_tok(a, "atom argument")
        if IDENT_RE.match(tok.text) or (allow_vars and _VAR_RE.match(tok.text)):
            args.append(tok.text)
        else:
            raise WorldParseError(f"bad atom argument {tok.text!r}", tok.line, tok.column)
    try:
        return Atom(name, tuple(args))
    except ValueError as exc:
        raise WorldParseError(str(exc), lst.line, lst.column) from None


def _atoms(nodes, allow_vars: bool = False) -> tuple[Atom, ...]:
    out: list[Atom] = []
    for n in nodes:
        a = _atom(n, allow_vars)
        if a not in out:
            out.append(a)
    return tuple(out)


def _sexpr_atom(atom: Atom) -> str:
    return "(" + " ".join((atom.name,) + atom.args) + ")"


# --------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class ActionTemplate:
    name: str
    params: tuple[str, ...]
    pre: tuple[Atom, ...] = ()
    add: tuple[Atom, ...] = ()
    dele: tuple[Atom, ...] = ()
    duration: int = 1
    p_fail: float = 0.0
    fail_add: tuple[Atom, ...] = ()
    fail_del: tuple[Atom, ...] = ()

    def problems(self) -> list[str]:
        out = []
        params = set(self.params)
        if len(params) != len(self.params):
            out.append(f"action {self.name}: repeated parameter")
        for group in (self.pre, self.add, self.dele, self.fail_add, self.fail_del):
            for atom in group:
                for arg in atom.args:
                    if arg.startswith("?") and arg not in params:
                        out.append(f"action {self.name}: variable {arg} in {atom} is not a parameter")
        both = set(self.add) & set(self.dele)
        if both:
            out.append(f"action {self.name}: {sorted(map(str, both))} both added and deleted")
        if not 0.0 <= self.p_fail <= 1.0:
            out.append(f"action {self.name}: pfail {self.p_fail} outside [0, 1]")
        if not isinstance(self.duration, int) or self.duration < 1:
            out.append(f"action {self.name}: duration {self.duration} must be >= 1")
        return out

    def ground(self, binding: Sequence[str]) -> "GroundAction":
        sub = dict(zip(self.params, binding))

        def inst(atoms: Iterable[Atom]) -> frozenset[Atom]:
            return frozenset(Atom(a.name, tuple(sub.get(x, x) for x in a.args)) for a in atoms)

        return GroundAction(
            atom=Atom(self.name, tuple(binding)),
            pre=tuple(Atom(a.name, tuple(sub.get(x, x) for x in a.args)) for a in self.pre),
            add=inst(self.add),
            dele=inst(self.dele),
            duration=self.duration,
            p_fail=self.p_fail,
            fail_add=inst(self.fail_add),
            fail_del=inst(self.fail_del),
        )


@dataclass(frozen=True)
class GroundAction:
    atom: Atom
    pre: tuple[Atom, ...]  # declaration order kept for the planner
    add: frozenset[Atom]
    dele: frozenset[Atom]
    duration: int
    p_fail: float
    fail_add: frozenset[Atom] = frozenset()
    fail_del: frozenset[Atom] = frozenset()


@dataclass(frozen=True)
class Domain:
    name: str
    objects: tuple[str, ...]
    predicates: tuple[tuple[str, int], ...]
    actions: tuple[ActionTemplate, ...] = ()
    _ground: list = field(default_factory=list, init=False, repr=False, compare=False, hash=False)

    @property
    def arity(self) -> dict[str, int]:
        return dict(self.predicates)

    def action(self, name: str) -> ActionTemplate:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def with_action(self, template: ActionTemplate) -> "Domain":
        """Return a copy with the same-named template replaced."""
        acts = tuple(template if a.name == template.name else a for a in self.actions)
        return Domain(self.name, self.objects, self.predicates, acts)

    def problems(self) -> list[str]:
        out = []
        names = [a.name for a in self.actions]
        for dup in sorted({n for n in names if names.count(n) > 1}):
            out.append(f"duplicate action name {dup}")
        arity = self.arity
        objects = set(self.objects)
        for tmpl in self.actions:
            out.extend(tmpl.problems())
            for group in (tmpl.pre, tmpl.add, tmpl.dele, tmpl.fail_add, tmpl.fail_del):
                for atom in group:
                    out.extend(_atom_problems(atom, arity, objects, allow_vars=True))
        return out

    def check_ground(self, atom: Atom) -> None:
        problems = _atom_problems(atom, self.arity, set(self.objects), allow_vars=False)
        if problems:
            raise SemanticError(problems[0])


def _atom_problems(atom: Atom, arity: dict, objects: set, allow_vars: bool) -> list[str]:
    out = []
    if atom.name not in arity:
        out.append(f"unknown predicate in {atom}")
    elif arity[atom.name] != len(atom.args):
        out.append(f"arity mismatch in {atom}: {atom.name} takes {arity[atom.name]}")
    for arg in atom.args:
        if arg.startswith("?"):
            if not allow_vars:
                out.append(f"variable {arg} in ground atom {atom}")
        elif arg not in objects:
            out.append(f"unknown object {arg} in {atom}")
    return out


@dataclass(frozen=True)
class Disturbance:
    tick: int
    add: frozenset[Atom] = frozenset()
    dele: frozenset[Atom] = frozenset()


@dataclass(frozen=True)
class Scenario:
    name: str
    init: frozenset[Atom]
    goal: frozenset[Atom]
    disturbances: tuple[Disturbance, ...] = ()
    max_ticks: int = 200

    def problems(self) -> list[str]:
        out = []
        ticks = [d.tick for d in self.disturbances]
        if any(t < 1 for t in ticks):
            out.append("disturbance ticks must be positive")
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            out.append("disturbance ticks must be strictly increasing")
        if self.max_ticks < 1:
            out.append("maxticks must be positive")
        return out


@dataclass(frozen=True)
class TraceStep:
    before: frozenset[Atom]
    action: Atom
    after: frozenset[Atom]


@dataclass(frozen=True)
class DemoTrace:
    name: str
    steps: tuple[TraceStep, ...]

    def check_chain(self) -> None:
        for k in range(len(self.steps) - 1):
            if self.steps[k].after != self.steps[k + 1].before:
                raise TraceError(
                    f"trace {self.name}: post-state does not match the next pre-state", k
                )


# --------------------------------------------------------------------------
# Parsing


def _expect_head(node, keyword: str) -> SList:
    lst = _expect_list(node, keyword)
    if _head(lst) != keyword:
        raise WorldParseError(f"expected ({keyword} ...), got ({_head(lst)} ...)", lst.line, lst.column)
    return lst


def _single_form(text: str, keyword: str) -> SList:
    forms = read_sexprs(text)
    found = [f for f in forms if isinstance(f, SList) and f and isinstance(f[0], Tok) and f[0].text == keyword]
    if not found:
        if forms:
            raise WorldParseError(f"expected ({keyword} ...)", *_where(forms[0]))
        raise WorldParseError(f"expected ({keyword} ...), input is empty", 1, 1)
    return found[0]


def _number(node, what: str) -> float:
    tok = _expect_tok(node, what)
    if not _NUM_RE.match(tok.text):
        raise WorldParseError(f"bad {what} {tok.text!r}", tok.line, tok.column)
    return float(tok.text)


def _parse_action(form: SList) -> ActionTemplate:
    if len(form) < 2:
        raise WorldParseError("action needs a name", form.line, form.column)
    name = _ident(form[1], "action name")
    params: tuple[str, ...] = ()
    fields: dict = {}
    for part in form[2:]:
        lst = _expect_list(part, "action section")
        key = _head(lst)
        body = lst[1:]
        if key == "params":
            ps = []
            for p in body:
                tok = _expect_tok(p, "parameter")
                if not _VAR_RE.match(tok.text):
                    raise WorldParseError(f"bad parameter {tok.text!r}", tok.line, tok.column)
                ps.append(tok.text)
            params = tuple(ps)
        elif key in ("pre", "add", "del"):
            fields[{"del": "dele"}.get(key, key)] = _atoms(body, allow_vars=True)
        elif key == "dur":
            value = _number(body[0] if body else lst, "duration")
            if value != int(value):
                raise WorldParseError("duration must be an integer", lst.line, lst.column)
            fields["duration"] = int(value)
        elif key == "pfail":
            fields["p_fail"] = _number(body[0] if body else lst, "pfail")
        elif key == "onfail":
            for sub in body:
                sl = _expect_list(sub, "onfail effect")
                k = _head(sl)
                if k == "add":
                    fields["fail_add"] = _atoms(sl[1:], allow_vars=True)
                elif k == "del":
                    fields["fail_del"] = _atoms(sl[1:], allow_vars=True)
                else:
                    raise WorldParseError(f"unknown onfail section {k!r}", sl.line, sl.column)
        else:
            raise WorldParseError(f"unknown action section {key!r}", lst.line, lst.column)
    return ActionTemplate(name=name, params=params, **fields)


def parse_domain(text: str) -> Domain:
    form = _single_form(text, "domain")
    if len(form) < 2:
        raise WorldParseError("domain needs a name", form.line, form.column)
    name = _ident(form[1], "domain name")
    objects: list[str] = []
    predicates: list[tuple[str, int]] = []
    actions: list[ActionTemplate] = []
    for part in form[2:]:
        lst = _expect_list(part, "domain section")
        key = _head(lst)
        if key == "objects":
            for o in lst[1:]:
                obj = _ident(o, "object")
                if obj not in objects:
                    objects.append(obj)
        elif key == "predicates":
            for p in lst[1:]:
                pl = _expect_list(p, "predicate")
                if len(pl) != 2:
                    raise WorldParseError("predicate is (name arity)", pl.line, pl.column)
                pname = _ident(pl[0], "predicate name")
                ar = _number(pl[1], "arity")
                if ar != int(ar):
                    raise WorldParseError("arity must be an integer", pl.line, pl.column)
                if any(pname == q for q, _ in predicates):
                    raise WorldParseError(f"predicate {pname} declared twice", pl.line, pl.column)
                predicates.append((pname, int(ar)))
        elif key == "action":
            actions.append(_parse_action(lst))
        else:
            raise WorldParseError(f"unknown domain section {key!r}", lst.line, lst.column)
    domain = Domain(name, tuple(objects), tuple(predicates), tuple(actions))
    problems = domain.problems()
    if problems:
        raise SemanticError(problems[0])
    return domain


def _checked_atoms(nodes, domain: Domain | None) -> frozenset[Atom]:
    atoms = _atoms(nodes)
    if domain is not None:
        for a in atoms:
            domain.check_ground(a)
    return frozenset(atoms)


def parse_scenario(text: str, domain: Domain) -> Scenario:
    form = _single_form(text, "scenario")
    if len(form) < 2:
        raise WorldParseError("scenario needs a name", form.line, form.column)
    name = _ident(form[1], "scenario name")
    init: frozenset[Atom] = frozenset()
    goal: frozenset[Atom] = frozenset()
    disturbances: list[Disturbance] = []
    max_ticks = 200
    for part in form[2:]:
        lst = _expect_list(part, "scenario section")
        key = _head(lst)
        if key == "init":
            init = _checked_atoms(lst[1:], domain)
        elif key == "goal":
            goal = _checked_atoms(lst[1:], domain)
        elif key == "disturb":
            if len(lst) < 2:
                raise WorldParseError("disturb needs a tick", lst.line, lst.column)
            tick = _number(lst[1], "tick")
            add: frozenset[Atom] = frozenset()
            dele: frozenset[Atom] = frozenset()
            for sub in lst[2:]:
                sl = _expect_list(sub, "disturbance effect")
                k = _head(sl)
                if k == "add":
                    add = add | _checked_atoms(sl[1:], domain)
                elif k == "del":
                    dele = dele | _checked_atoms(sl[1:], domain)
                else:
                    raise WorldParseError(f"unknown disturb section {k!r}", sl.line, sl.column)
            disturbances.append(Disturbance(int(tick), add, dele))
        elif key == "maxticks":
            max_ticks = int(_number(lst[1] if len(lst) > 1 else lst, "maxticks"))
        else:
            raise WorldParseError(f"unknown scenario section {key!r}", lst.line, lst.column)
    scenario = Scenario(name, init, goal, tuple(disturbances), max_ticks)
    problems = scenario.problems()
    if problems:
        raise SemanticError(problems[0])
    return scenario


def parse_trace(text: str, domain: Domain | None = None) -> DemoTrace:
    """Parse a demonstration trace.

    Without a domain only syntax and step chaining are checked; this is how
    traces are read when the domain is what we want to learn.
    """
    form = _single_form(text, "trace")
    if len(form) < 2:
        raise WorldParseError("trace needs a name", form.line, form.column)
    name = _ident(form[1], "trace name")
    steps = []
    for part in form[2:]:
        lst = _expect_head(part, "step")
        pre = post = act = None
        for sub in lst[1:]:
            sl = _expect_list(sub, "step section")
            k = _head(sl)
            if k == "pre":
                pre = _checked_atoms(sl[1:], domain)
            elif k == "post":
                post = _checked_atoms(sl[1:], domain)
            elif k == "act":
                if len(sl) != 2:
                    raise WorldParseError("act holds one action", sl.line, sl.column)
                act = _atom(sl[1], allow_vars=False)
                if domain is not None:
                    try:
                        tmpl = domain.action(act.name)
                    except KeyError:
                        raise SemanticError(f"unknown action in {act}") from None
                    if len(tmpl.params) != len(act.args):
                        raise SemanticError(f"arity mismatch in {act}")
                    for arg in act.args:
                        if arg not in domain.objects:
                            raise SemanticError(f"unknown object {arg} in {act}")
            else:
                raise WorldParseError(f"unknown step section {k!r}", sl.line, sl.column)
        if pre is None or post is None or act is None:
            raise WorldParseError("step needs (pre ...), (act ...) and (post ...)", lst.line, lst.column)
        steps.append(TraceStep(pre, act, post))
    trace = DemoTrace(name, tuple(steps))
    trace.check_chain()
    return trace


# --------------------------------------------------------------------------
# Serialisation


def _fmt_num(x: float) -> str:
    return repr(float(x))


def serialize_domain(domain: Domain) -> str:
    lines = [f"(domain {domain.name}"]
    lines.append("  (objects" + "".join(" " + o for o in domain.objects) + ")")
    lines.append("  (predicates" + "".join(f" ({p} {n})" for p, n in domain.predicates) + ")")
    for a in domain.actions:
        lines.append(f"  (action {a.name} (params{''.join(' ' + p for p in a.params)})")
        body = []
        for key, group in (("pre", a.pre), ("add", a.add), ("del", a.dele)):
            if group:
                body.append(f"({key} " + " ".join(map(_sexpr_atom, group)) + ")")
        body.append(f"(dur {a.duration}) (pfail {_fmt_num(a.p_fail)})")
        fails = []
        if a.fail_add:
            fails.append("(add " + " ".join(map(_sexpr_atom, a.fail_add)) + ")")
        if a.fail_del:
            fails.append("(del " + " ".join(map(_sexpr_atom, a.fail_del)) + ")")
        if fails:
            body.append("(onfail " + " ".join(fails) + ")")
        lines.append("    " + "\n    ".join(body) + ")")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def serialize_state(atoms: Iterable[Atom]) -> str:
    return " ".join(_sexpr_atom(a) for a in sorted(atoms))


def serialize_scenario(scenario: Scenario) -> str:
    lines = [f"(scenario {scenario.name}"]
    lines.append(f"  (init {serialize_state(scenario.init)})")
    lines.append(f"  (goal {serialize_state(scenario.goal)})")
    for d in scenario.disturbances:
        parts = [f"(disturb {d.tick}"]
        if d.dele:
            parts.append(f"(del {serialize_state(d.dele)})")
        if d.add:
            parts.append(f"(add {serialize_state(d.add)})")
        lines.append("  " + " ".join(parts) + ")")
    lines.append(f"  (maxticks {scenario.max_ticks}))")
    return "\n".join(lines) + "\n"


def serialize_trace(trace: DemoTrace) -> str:
    lines = [f"(trace {trace.name}"]
    for s in trace.steps:
        lines.append(f"  (step (pre {serialize_state(s.before)})")
        lines.append(f"        (act {_sexpr_atom(s.action)})")
        lines.append(f"        (post {serialize_state(s.after)}))")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Operations


def ground_actions(domain: Domain) -> list[GroundAction]:
    """Every binding of objects to every template's parameters.

    Templates keep declaration order; bindings are the lexicographic product
    over the objects in declaration order.
    """
    if domain._ground:
        return list(domain._ground[0])
    out = []
    for tmpl in domain.actions:
        for binding in itertools.product(domain.objects, repeat=len(tmpl.params)):
            out.append(tmpl.ground(binding))
    domain._ground.append(tuple(out))
    return out


def ground_atoms(domain: Domain) -> list[Atom]:
    """Every ground atom over the declared predicates and objects."""
    out = []
    for name, n in domain.predicates:
        for args in itertools.product(domain.objects, repeat=n):
            out.append(Atom(name, args))
    return out


def holds(state: frozenset[Atom], atom: Atom) -> bool:
    return atom in state


def entails(state: frozenset[Atom], atoms: Iterable[Atom]) -> bool:
    return all(a in state for a in atoms)


def apply(state: frozenset[Atom], add: Iterable[Atom], dele: Iterable[Atom]) -> frozenset[Atom]:
    return (frozenset(state) - frozenset(dele)) | frozenset(add)


def achievers(domain: Domain, atom: Atom) -> list[GroundAction]:
    return [g for g in ground_actions(domain) if atom in g.add]


class CapExceededError(RuntimeError):
    pass


def enumerate_reachable(domain: Domain, init: Iterable[Atom], cap: int) -> set[frozenset[Atom]]:
    """Breadth-first closure of ``init`` under successful action effects."""
    start = frozenset(init)
    seen = {start}
    if len(seen) > cap:
        raise CapExceededError(f"more than {cap} reachable states")
    queue = deque([start])
    acts = ground_actions(domain)
    while queue:
        state = queue.popleft()
        for g in acts:
            if entails(state, g.pre):
                nxt = apply(state, g.add, g.dele)
                if nxt not in seen:
                    seen.add(nxt)
                    if len(seen) > cap:
                        raise CapExceededError(f"more than {cap} reachable states")
                    queue.append(nxt)
    return seen
