"""Behavior trees: an engine plus planning, demonstration and GP synthesis."""

from .core import Atom, BtNode, NodeKind, Status, action, condition, fallback, parallel, sequence
from .text import export_dot, parse_bt, serialize_bt

__all__ = [
    "Atom",
    "BtNode",
    "NodeKind",
    "Status",
    "action",
    "condition",
    "export_dot",
    "fallback",
    "parallel",
    "parse_bt",
    "sequence",
    "serialize_bt",
]
__version__ = "0.1.0"
