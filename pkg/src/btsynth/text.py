"""Indentation-based ``.bt`` text format and Graphviz export.

One node per line, two spaces per level::

    fallback
      condition delivered(cube1)
      sequence
        condition holding(cube1)
        action place(cube1)
"""

from __future__ import annotations

import enum
import re

from .core import Atom, BtNode, NodeKind, ensure_valid, iter_paths

_ATOM_RE = re.compile(r"([a-z][a-z0-9_]*)\(((?:[a-z][a-z0-9_]*(?:,[a-z][a-z0-9_]*)*)?)\)\Z")
_INT_RE = re.compile(r"[0-9]+\Z")


class ParseErrorKind(enum.Enum):
    BAD_INDENT = "BAD_INDENT"
    UNKNOWN_KEYWORD = "UNKNOWN_KEYWORD"
    BAD_ATOM = "BAD_ATOM"
    BAD_THRESHOLD = "BAD_THRESHOLD"
    EMPTY_CONTROL = "EMPTY_CONTROL"
    EMPTY_INPUT = "EMPTY_INPUT"


class ParseError(ValueError):
    def __init__(self, kind: ParseErrorKind, line: int, column: int, message: str):
        self.kind = kind
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"{line}:{column}: {kind.value}: {message}")


def _parse_atom(token: str, line: int, column: int) -> Atom:
    m = _ATOM_RE.match(token)
    if not m:
        raise ParseError(ParseErrorKind.BAD_ATOM, line, column, f"malformed atom {token!r}")
    name, args = m.groups()
    return Atom(name, tuple(args.split(",")) if args else ())


class _Open:
    """A control node whose children are still being collected."""

    __slots__ = ("kind", "threshold", "children", "line", "column", "depth")

    def __init__(self, kind, threshold, line, column, depth):
        self.kind = kind
        self.threshold = threshold
        self.children: list[BtNode] = []
        self.line = line
        self.column = column
        self.depth = depth

    def close(self) -> BtNode:
        if not self.children:
            raise ParseError(
                ParseErrorKind.EMPTY_CONTROL, self.line, self.column,
                f"{self.kind.value} has no children",
            )
        if self.kind is NodeKind.PARALLEL and self.threshold > len(self.children):
            raise ParseError(
                ParseErrorKind.BAD_THRESHOLD, self.line, self.column,
                f"threshold {self.threshold} exceeds {len(self.children)} children",
            )
        return BtNode(self.kind, tuple(self.children), threshold=self.threshold)


def parse_bt(text: str | bytes) -> BtNode:
    """Parse ``.bt`` text. Raises :class:`ParseError` at the first problem."""
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("latin-1")
    lines = text.split("\n")
    stack: list[_Open] = []
    root: BtNode | None = None
    saw_node = False

    def attach(node: BtNode) -> None:
        nonlocal root
        if stack:
            stack[-1].children.append(node)
        else:
            root = node

    for lineno, raw in enumerate(lines, start=1):
        if raw == "":
            continue
        stripped = raw.lstrip(" ")
        indent = len(raw) - len(stripped)
        if not stripped or stripped[0] in "\t\r\f\v" or "\t" in raw[:indent + 1]:
            raise ParseError(ParseErrorKind.BAD_INDENT, lineno, indent + 1,
                             "indentation must be spaces followed by a keyword")
        if indent % 2:
            raise ParseError(ParseErrorKind.BAD_INDENT, lineno, indent + 1,
                             f"odd indentation of {indent} spaces")
        level = indent // 2
        col = indent + 1
        if saw_node and not stack:
            raise ParseError(ParseErrorKind.BAD_INDENT, lineno, col,
                             "a tree has exactly one root")
        expected_max = len(stack)
        if level > expected_max or (not saw_node and level != 0):
            raise ParseError(ParseErrorKind.BAD_INDENT, lineno, col,
                             f"indentation level {level}, expected at most {expected_max}")
        # finish every block deeper than this line
        while len(stack) > level:
            finished = stack.pop()
            attach(finished.close())
        if saw_node and not stack:
            raise ParseError(ParseErrorKind.BAD_INDENT, lineno, col,
                             "a tree has exactly one root")
        saw_node = True

        parts = stripped.split(" ")
        keyword = parts[0]
        rest = parts[1:]
        if keyword in ("sequence", "fallback"):
            if rest:
                raise ParseError(ParseErrorKind.UNKNOWN_KEYWORD, lineno,
                                 col + len(keyword) + 1,
                                 f"unexpected text after {keyword}")
            stack.append(_Open(NodeKind(keyword), None, lineno, col, level))
        elif keyword == "parallel":
            if len(rest) != 1 or not _INT_RE.match(rest[0]) or int(rest[0]) < 1:
                raise ParseError(ParseErrorKind.BAD_THRESHOLD, lineno,
                                 col + len(keyword) + 1,
                                 "parallel needs one positive integer threshold")
            stack.append(_Open(NodeKind.PARALLEL, int(rest[0]), lineno, col, level))
        elif keyword in ("condition", "action"):
            if len(rest) != 1:
                raise ParseError(ParseErrorKind.BAD_ATOM, lineno, col + len(keyword) + 1,
                                 f"{keyword} needs exactly one atom")
            atom = _parse_atom(rest[0], lineno, col + len(keyword) + 1)
            attach(BtNode(NodeKind(keyword), atom=atom))
        else:
            raise ParseError(ParseErrorKind.UNKNOWN_KEYWORD, lineno, col,
                             f"unknown keyword {keyword!r}")

    while stack:
        finished = stack.pop()
        attach(finished.close())
    if root is None:
        raise ParseError(ParseErrorKind.EMPTY_INPUT, 1, 1, "no nodes in input")
    return root


def _header(node: BtNode) -> str:
    if node.kind is NodeKind.PARALLEL:
        return f"parallel {node.threshold}"
    if node.is_leaf:
        return f"{node.kind.value} {node.atom}"
    return node.kind.value


def serialize_bt(tree: BtNode) -> str:
    ensure_valid(tree)
    return "".join(
        "  " * len(path) + _header(node) + "\n" for path, node in iter_paths(tree)
    )


def _dot_id(path) -> str:
    return "n" + "".join(f"_{i}" for i in path)


def _dot_label(node: BtNode) -> str:
    if node.kind is NodeKind.SEQUENCE:
        return "→"
    if node.kind is NodeKind.FALLBACK:
        return "?"
    if node.kind is NodeKind.PARALLEL:
        return f"⇉{node.threshold}"
    suffix = "?" if node.kind is NodeKind.CONDITION else "!"
    return f"{node.atom}{suffix}"


def export_dot(tree: BtNode) -> str:
    ensure_valid(tree)
    lines = ["digraph bt {", "  ordering=out;"]
    edges = []
    for path, node in iter_paths(tree):
        if node.kind is NodeKind.CONDITION:
            shape = "ellipse"
        elif node.kind is NodeKind.ACTION:
            shape = "box"
        else:
            shape = "square"
        label = _dot_label(node).replace('"', '\\"')
        lines.append(f'  {_dot_id(path)} [label="{label}", shape={shape}];')
        if path:
            edges.append(f"  {_dot_id(path[:-1])} -> {_dot_id(path)};")
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
