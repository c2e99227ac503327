"""Behavior tree data structure, reactive tick semantics and tree edits.

Trees are immutable values. Every edit returns a new tree and shares the
untouched subtrees with its input, so GP parents can be reused freely.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Protocol

IDENT_RE = re.compile(r"[a-z][a-z0-9_]*\Z")
_ARG_RE = re.compile(r"\??[a-z][a-z0-9_]*\Z")


class Status(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"

    def flipped(self) -> "Status":
        """Swap SUCCESS and FAILURE, leaving RUNNING alone."""
        if self is Status.SUCCESS:
            return Status.FAILURE
        if self is Status.FAILURE:
            return Status.SUCCESS
        return self


@dataclass(frozen=True, order=True)
class Atom:
    """A predicate or action name applied to an ordered list of identifiers.

    Arguments prefixed with ``?`` are variables; they only occur inside
    action templates.
    """

    name: str
    args: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not IDENT_RE.match(self.name):
            raise ValueError(f"invalid atom name {self.name!r}")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))
        for arg in self.args:
            if not isinstance(arg, str) or not _ARG_RE.match(arg):
                raise ValueError(f"invalid atom argument {arg!r} in {self.name}")

    @classmethod
    def parse(cls, text: str) -> "Atom":
        """Parse ``name(a,b)`` (no spaces). ``name`` alone is a 0-ary atom."""
        if "(" not in text:
            return cls(text)
        if not text.endswith(")"):
            raise ValueError(f"malformed atom {text!r}")
        name, _, rest = text[:-1].partition("(")
        args = tuple(rest.split(",")) if rest else ()
        return cls(name, args)

    @property
    def is_ground(self) -> bool:
        return not any(a.startswith("?") for a in self.args)

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"


class NodeKind(enum.Enum):
    SEQUENCE = "sequence"
    FALLBACK = "fallback"
    PARALLEL = "parallel"
    CONDITION = "condition"
    ACTION = "action"

    @property
    def is_control(self) -> bool:
        return self in _CONTROL_KINDS


_CONTROL_KINDS = frozenset({NodeKind.SEQUENCE, NodeKind.FALLBACK, NodeKind.PARALLEL})


@dataclass(frozen=True)
class BtNode:
    kind: NodeKind
    children: tuple["BtNode", ...] = ()
    atom: Atom | None = None
    threshold: int | None = None
    _size: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "_size", 1 + sum(c._size for c in self.children))

    @property
    def is_leaf(self) -> bool:
        return not self.kind.is_control

    def __str__(self) -> str:
        if self.is_leaf:
            return f"{self.atom}{'?' if self.kind is NodeKind.CONDITION else '!'}"
        head = self.kind.value
        if self.kind is NodeKind.PARALLEL:
            head += f"[{self.threshold}]"
        return f"{head}({', '.join(str(c) for c in self.children)})"


def _as_atom(atom: Atom | str) -> Atom:
    return atom if isinstance(atom, Atom) else Atom.parse(atom)


def sequence(*children: BtNode) -> BtNode:
    return BtNode(NodeKind.SEQUENCE, tuple(children))


def fallback(*children: BtNode) -> BtNode:
    return BtNode(NodeKind.FALLBACK, tuple(children))


def parallel(threshold: int, *children: BtNode) -> BtNode:
    return BtNode(NodeKind.PARALLEL, tuple(children), threshold=threshold)


def condition(atom: Atom | str) -> BtNode:
    return BtNode(NodeKind.CONDITION, atom=_as_atom(atom))


def action(atom: Atom | str) -> BtNode:
    return BtNode(NodeKind.ACTION, atom=_as_atom(atom))


Path = tuple[int, ...]


@dataclass(frozen=True)
class Violation:
    path: Path
    message: str

    def __str__(self) -> str:
        return f"{list(self.path)}: {self.message}"


def validate(tree: BtNode) -> list[Violation]:
    """Return every structural invariant violation, in pre-order."""
    # Frozen values cannot form cycles, so only per-node checks are needed.
    out: list[Violation] = []

    def visit(node: BtNode, path: Path) -> None:
        if node.kind.is_control:
            if node.atom is not None:
                out.append(Violation(path, f"{node.kind.value} node carries an atom"))
            if not node.children:
                out.append(Violation(path, f"{node.kind.value} node has no children"))
            if node.kind is NodeKind.PARALLEL:
                m = node.threshold
                if not isinstance(m, int) or m < 1 or m > len(node.children):
                    out.append(
                        Violation(
                            path,
                            f"parallel threshold {m} outside 1..{len(node.children)}",
                        )
                    )
            elif node.threshold is not None:
                out.append(Violation(path, f"{node.kind.value} node carries a threshold"))
        else:
            if node.children:
                out.append(Violation(path, f"{node.kind.value} leaf has children"))
            if not isinstance(node.atom, Atom):
                out.append(Violation(path, f"{node.kind.value} leaf has no atom"))
            elif not node.atom.is_ground:
                out.append(Violation(path, f"leaf atom {node.atom} is not ground"))
        for i, child in enumerate(node.children):
            visit(child, path + (i,))

    visit(tree, ())
    return out


class InvalidTreeError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("invalid tree: " + "; ".join(str(v) for v in violations))


def ensure_valid(tree: BtNode) -> BtNode:
    problems = validate(tree)
    if problems:
        raise InvalidTreeError(problems)
    return tree


# --------------------------------------------------------------------------
# Ticking


class TickSink(Protocol):
    """What the engine needs from the world it controls."""

    def evaluate_condition(self, atom: Atom) -> Status: ...

    def tick_action(self, atom: Atom) -> Status: ...

    def halt_action(self, atom: Atom) -> None: ...


class TickSession:
    """A tree bound to a sink, remembering which actions were left running.

    The tree itself is memoryless: every tick restarts from the root's
    leftmost child. The session only keeps the set of actions that returned
    RUNNING on the previous tick so it can halt the ones a new tick no longer
    reaches.
    """

    def __init__(self, tree: BtNode, sink: TickSink):
        self.tree = tree
        self.sink = sink
        self.running: set[Atom] = set()

    def tick(self) -> Status:
        ticked: set[Atom] = set()
        now_running: set[Atom] = set()
        status = _tick(self.tree, self.sink, ticked, now_running)
        for atom in sorted(self.running - ticked):
            self.sink.halt_action(atom)
        self.running = now_running
        return status

    def halt_all(self) -> None:
        for atom in sorted(self.running):
            self.sink.halt_action(atom)
        self.running = set()


def _tick(node: BtNode, sink: TickSink, ticked: set[Atom], running: set[Atom]) -> Status:
    kind = node.kind
    if kind is NodeKind.SEQUENCE:
        for child in node.children:
            status = _tick(child, sink, ticked, running)
            if status is not Status.SUCCESS:
                return status
        return Status.SUCCESS
    if kind is NodeKind.FALLBACK:
        for child in node.children:
            status = _tick(child, sink, ticked, running)
            if status is not Status.FAILURE:
                return status
        return Status.FAILURE
    if kind is NodeKind.PARALLEL:
        n = len(node.children)
        m = node.threshold
        successes = failures = 0
        for child in node.children:
            status = _tick(child, sink, ticked, running)
            if status is Status.SUCCESS:
                successes += 1
            elif status is Status.FAILURE:
                failures += 1
        if successes >= m:
            return Status.SUCCESS
        if failures > n - m:
            return Status.FAILURE
        return Status.RUNNING
    if kind is NodeKind.CONDITION:
        status = sink.evaluate_condition(node.atom)
        if status is Status.RUNNING:
            raise ValueError(f"condition {node.atom} evaluated to RUNNING")
        return status
    ticked.add(node.atom)
    status = sink.tick_action(node.atom)
    if status is Status.RUNNING:
        running.add(node.atom)
    return status


def tick_root(tree: BtNode, sink: TickSink) -> Status:
    """Tick a tree once with no history (nothing to preempt)."""
    return TickSession(tree, sink).tick()


# --------------------------------------------------------------------------
# Metrics and traversal


def node_count(tree: BtNode) -> int:
    return tree._size


def depth(tree: BtNode) -> int:
    if not tree.children:
        return 1
    return 1 + max(depth(c) for c in tree.children)


def iter_paths(tree: BtNode, prefix: Path = ()) -> Iterator[tuple[Path, BtNode]]:
    """Yield ``(path, node)`` pairs in pre-order."""
    stack = [(prefix, tree)]
    while stack:
        path, node = stack.pop()
        yield path, node
        for i in range(len(node.children) - 1, -1, -1):
            stack.append((path + (i,), node.children[i]))


def leaves(tree: BtNode) -> Iterator[BtNode]:
    for _, node in iter_paths(tree):
        if node.is_leaf:
            yield node


# --------------------------------------------------------------------------
# Edits


class InvalidPathError(IndexError):
    def __init__(self, path: Path, position: int, child_count: int):
        self.path = tuple(path)
        self.position = position
        super().__init__(
            f"path {list(path)}: index {path[position]} at step {position} "
            f"is out of range for a node with {child_count} children"
        )


class TreeEditError(ValueError):
    pass


def get_subtree(tree: BtNode, path: Path | list[int]) -> BtNode:
    node = tree
    for step, index in enumerate(path):
        if not 0 <= index < len(node.children):
            raise InvalidPathError(tuple(path), step, len(node.children))
        node = node.children[index]
    return node


def _rebuild(tree: BtNode, path: Path, fn) -> BtNode:
    """Replace the node at ``path`` by ``fn(node)``, copying only the spine."""
    if not path:
        return fn(tree)
    get_subtree(tree, path)  # raises on a bad path
    head, rest = path[0], path[1:]
    kids = list(tree.children)
    kids[head] = _rebuild(kids[head], rest, fn)
    return BtNode(tree.kind, tuple(kids), tree.atom, tree.threshold)


def _checked(tree: BtNode) -> BtNode:
    problems = validate(tree)
    if problems:
        raise TreeEditError("edit produced an invalid tree: " + "; ".join(map(str, problems)))
    return tree


def replace_subtree(tree: BtNode, path: Path | list[int], new: BtNode) -> BtNode:
    return _checked(_rebuild(tree, tuple(path), lambda _: new))


def insert_child(tree: BtNode, path: Path | list[int], index: int, new: BtNode) -> BtNode:
    path = tuple(path)
    target = get_subtree(tree, path)
    if target.is_leaf:
        raise TreeEditError(f"cannot insert under {target.kind.value} leaf at {list(path)}")
    if not 0 <= index <= len(target.children):
        raise TreeEditError(
            f"insert index {index} outside 0..{len(target.children)} at {list(path)}"
        )

    def put(node: BtNode) -> BtNode:
        kids = node.children[:index] + (new,) + node.children[index:]
        return BtNode(node.kind, kids, node.atom, node.threshold)

    return _checked(_rebuild(tree, path, put))


def delete_node(tree: BtNode, path: Path | list[int]) -> BtNode:
    """Remove the addressed subtree.

    A control node left without children is removed as well, walking up
    towards the root. Emptying the root is an error. Deleting the root itself
    is only allowed when it has a single child, which then becomes the root.
    """
    path = tuple(path)
    get_subtree(tree, path)
    if not path:
        if len(tree.children) == 1:
            return tree.children[0]
        raise TreeEditError("deleting the entire tree")
    # climb while the parent would be left empty
    cut = path
    while len(cut) > 1 and len(get_subtree(tree, cut[:-1]).children) == 1:
        cut = cut[:-1]
    if len(cut) == 1 and len(tree.children) == 1:
        raise TreeEditError("deleting the entire tree")
    parent_path, index = cut[:-1], cut[-1]

    def drop(node: BtNode) -> BtNode:
        kids = node.children[:index] + node.children[index + 1 :]
        return BtNode(node.kind, kids, node.atom, node.threshold)

    return _checked(_rebuild(tree, parent_path, drop))
