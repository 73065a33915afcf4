"""Behaviour-tree genome: node types, tick semantics, structural metrics,
static pruning, and the editable s-expression text format.

A tree is represented by its root ``Node``. Composites (Selector, Sequence)
hold an ordered child list; Conditions and Actions are leaves. Ticking is a
depth-first, left-to-right traversal returning Success or Failure; there is
no Running state and no memory between ticks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum


class NodeKind(Enum):
    SELECTOR = "sel"
    SEQUENCE = "seq"
    CONDITION = "cond"
    ACTION = "act"


COMPOSITE_KINDS = (NodeKind.SELECTOR, NodeKind.SEQUENCE)

GREATER = ">"
LESS = "<"

# Blackboard inputs a Condition may test, with their value ranges.
INPUT_RANGES = {
    "x": (-1.0, 1.0),
    "sigma": (0.0, 100.0),
    "Sigma": (0.0, 1.0),
    "Delta": (-1.0, 1.0),
}
RUDDER_RANGE = (-1.0, 1.0)

# Bounds used for the hand-edited-tree warnings in parse(); evolution
# enforces its own copies of these through EAParams.
DEFAULT_MAX_DEPTH = 6
DEFAULT_MAX_CHILDREN = 6


class TickStatus(Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass
class Blackboard:
    """Shared state between sensing and the tree: four inputs, one output.

    x: horizontal window position in [-1, 1], 0 at the image centre.
    sigma: window response in [0, 100], lower means higher certainty.
    Sigma: normalized sum of disparity in [0, 1].
    Delta: normalized left/right disparity difference in [-1, 1].
    r: rudder command in [-1, 1], written only by Action nodes.
    """

    x: float = 0.0
    sigma: float = 100.0
    Sigma: float = 0.0
    Delta: float = 0.0
    r: float = 0.0


@dataclass
class Node:
    """One tree node. Only the fields relevant to ``kind`` are meaningful:
    composites use ``children``, Conditions use ``variable``/``comparison``/
    ``threshold``, Actions use ``rudder``."""

    kind: NodeKind
    children: list["Node"] = field(default_factory=list)
    variable: str = ""
    comparison: str = ""
    threshold: float = 0.0
    rudder: float = 0.0


# A behaviour tree is identified with its root node.
BehaviourTree = Node


def selector(*children: Node) -> Node:
    return Node(NodeKind.SELECTOR, list(children))


def sequence(*children: Node) -> Node:
    return Node(NodeKind.SEQUENCE, list(children))


def condition(variable: str, comparison: str, threshold: float) -> Node:
    if variable not in INPUT_RANGES:
        raise ValueError(f"unknown blackboard variable {variable!r}")
    if comparison not in (GREATER, LESS):
        raise ValueError(f"comparison must be '>' or '<', got {comparison!r}")
    return Node(NodeKind.CONDITION, variable=variable, comparison=comparison,
                threshold=float(threshold))


def action(rudder: float) -> Node:
    return Node(NodeKind.ACTION, rudder=float(rudder))


class StructuralError(Exception):
    """The node graph is not a rooted tree (cycle, shared node, or a leaf
    with children)."""


def index_nodes(root: Node) -> dict[int, int]:
    """Map id(node) -> preorder index (root is 0), validating structure.

    Raises StructuralError if a node is reachable twice (cycle or shared
    subtree) or a leaf has children.
    """
    order: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in order:
            raise StructuralError(
                "node reachable by more than one path (cycle or shared subtree)")
        order[id(node)] = len(order)
        if node.kind in COMPOSITE_KINDS:
            stack.extend(reversed(node.children))
        elif node.children:
            raise StructuralError(f"{node.kind.value} node has children")
    return order


def size(tree: Node) -> int:
    """Total node count, root included."""
    return len(index_nodes(tree))


def depth(tree: Node) -> int:
    """Longest root-to-leaf edge count; a lone root has depth 0."""
    index_nodes(tree)
    best = 0
    stack = [(tree, 0)]
    while stack:
        node, d = stack.pop()
        if d > best:
            best = d
        for child in node.children:
            stack.append((child, d + 1))
    return best


def copy_tree(tree: Node) -> Node:
    if tree.kind in COMPOSITE_KINDS:
        return Node(tree.kind, [copy_tree(c) for c in tree.children])
    return replace(tree, children=[])


def nodes_preorder(tree: Node) -> list[Node]:
    """All nodes in preorder; positions match the indices of index_nodes."""
    out: list[Node] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        out.append(node)
        stack.extend(reversed(node.children))
    return out


def subtree_at(tree: Node, index: int) -> Node:
    return nodes_preorder(tree)[index]


def replace_subtree(tree: Node, index: int, replacement: Node) -> Node:
    """Copy of ``tree`` with the subtree at the given preorder index swapped
    for ``replacement`` (inserted by reference, not copied)."""
    counter = [0]

    def rebuild(node: Node) -> Node:
        if counter[0] == index:
            counter[0] += size(node)
            return replacement
        counter[0] += 1
        if node.kind in COMPOSITE_KINDS:
            return Node(node.kind, [rebuild(c) for c in node.children])
        return replace(node, children=[])

    if index < 0 or index >= size(tree):
        raise IndexError(f"node index {index} out of range")
    return rebuild(tree)


def tick(tree: Node, bb: Blackboard) -> tuple[TickStatus, Blackboard]:
    """Evaluate the tree once against a copy of ``bb``.

    Selector returns Success at its first succeeding child, Sequence returns
    Failure at its first failing child; empty composites are Failure and
    Success respectively. Conditions compare strictly, so ties fail. Actions
    write their setting to r and succeed; if no Action runs, r keeps its
    prior value. The input blackboard is never mutated.
    """
    status, out, _last, _trace = _tick_full(tree, bb, want_trace=False)
    return status, out


def tick_trace(tree, bb):
    """Like tick() but also returns the execution trace and the index of the
    last Action that wrote r.

    Returns (status, blackboard, trace, last_action) where trace is a list
    of (preorder index, TickStatus) in visit order and last_action is a
    preorder index or None.
    """
    status, out, last, trace = _tick_full(tree, bb, want_trace=True)
    return status, out, trace, last


def _tick_full(tree, bb, want_trace):
    order = index_nodes(tree)
    out = replace(bb)
    trace: list = [] if want_trace else None
    last = [None]

    def visit(node: Node) -> TickStatus:
        entry = None
        if trace is not None:
            entry = [order[id(node)], None]
            trace.append(entry)
        if node.kind is NodeKind.CONDITION:
            value = getattr(out, node.variable)
            if node.comparison == GREATER:
                ok = value > node.threshold
            else:
                ok = value < node.threshold
            status = TickStatus.SUCCESS if ok else TickStatus.FAILURE
        elif node.kind is NodeKind.ACTION:
            out.r = node.rudder
            last[0] = order[id(node)]
            status = TickStatus.SUCCESS
        elif node.kind is NodeKind.SELECTOR:
            status = TickStatus.FAILURE
            for child in node.children:
                if visit(child) is TickStatus.SUCCESS:
                    status = TickStatus.SUCCESS
                    break
        else:
            status = TickStatus.SUCCESS
            for child in node.children:
                if visit(child) is TickStatus.FAILURE:
                    status = TickStatus.FAILURE
                    break
        if entry is not None:
            entry[1] = status
        return status

    status = visit(tree)
    if trace is not None:
        trace = [(i, s) for i, s in trace]
    return status, out, last[0], trace


def prune(tree: Node) -> Node:
    """Behaviour-preserving simplification, repeated to a fixpoint.

    Removes Selector children after an Action (unreachable, Actions always
    succeed), folds empty composites into their parent as the constant they
    return, and collapses single-child composites. For every blackboard,
    tick(prune(t), bb) matches tick(t, bb) in status and final r.
    """
    index_nodes(tree)
    current = copy_tree(tree)
    while True:
        simplified = _prune_pass(current)
        if simplified == current:
            return simplified
        current = simplified


def _prune_pass(node: Node) -> Node:
    if node.kind not in COMPOSITE_KINDS:
        return replace(node, children=[])
    kept: list[Node] = []
    for child in (_prune_pass(c) for c in node.children):
        if child.kind in COMPOSITE_KINDS and not child.children:
            succeeds = child.kind is NodeKind.SEQUENCE
            if succeeds == (node.kind is NodeKind.SELECTOR):
                # Constant that stops this composite: keep it as the final
                # child, everything after is unreachable.
                kept.append(child)
                break
            continue  # constant that just passes control on: drop it
        kept.append(child)
        if node.kind is NodeKind.SELECTOR and child.kind is NodeKind.ACTION:
            break
    if len(kept) == 1:
        return kept[0]
    return Node(node.kind, kept)


class ParseError(Exception):
    """Syntax or validity error in the text form, with source location."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class TreeBoundsWarning(UserWarning):
    """A parsed tree exceeds the evolution depth or child-count bounds.

    Hand-edited trees are allowed to; this is informational only.
    """


@dataclass
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < len(text) and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


def parse(text: str, max_depth: int = DEFAULT_MAX_DEPTH,
          max_children: int = DEFAULT_MAX_CHILDREN) -> Node:
    """Parse the s-expression tree format.

    Grammar: ``(sel child*)``, ``(seq child*)``, ``(cond VAR CMP NUM)``,
    ``(act r NUM)`` with VAR in {x, sigma, Sigma, Delta} and CMP in {>, <};
    ``;`` starts a comment running to end of line. Raises ParseError with
    line/column on bad syntax, unknown variables, or out-of-range numbers.
    Trees deeper than ``max_depth`` or wider than ``max_children`` only get
    a TreeBoundsWarning.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input", 1, 1)
    node, pos = _parse_node(tokens, 0)
    if pos != len(tokens):
        extra = tokens[pos]
        raise ParseError("unexpected content after tree", extra.line, extra.col)
    _warn_bounds(node, max_depth, max_children)
    return node


def _expect(tokens: list[_Token], pos: int, what: str) -> _Token:
    if pos >= len(tokens):
        last = tokens[-1]
        raise ParseError(f"unexpected end of input, expected {what}",
                         last.line, last.col + len(last.text))
    return tokens[pos]


def _parse_number(tok: _Token, low: float, high: float, what: str) -> float:
    try:
        value = float(tok.text)
    except ValueError:
        raise ParseError(f"invalid number {tok.text!r}", tok.line, tok.col) from None
    if not (low <= value <= high):
        raise ParseError(f"{what} {tok.text} outside [{low:g}, {high:g}]",
                         tok.line, tok.col)
    return value


def _parse_node(tokens: list[_Token], pos: int) -> tuple[Node, int]:
    tok = _expect(tokens, pos, "'('")
    if tok.text != "(":
        raise ParseError(f"expected '(', got {tok.text!r}", tok.line, tok.col)
    head = _expect(tokens, pos + 1, "a node type")
    pos += 2
    if head.text in ("sel", "seq"):
        children = []
        while True:
            nxt = _expect(tokens, pos, "a child or ')'")
            if nxt.text == ")":
                kind = NodeKind.SELECTOR if head.text == "sel" else NodeKind.SEQUENCE
                return Node(kind, children), pos + 1
            child, pos = _parse_node(tokens, pos)
            children.append(child)
    if head.text == "cond":
        var = _expect(tokens, pos, "a variable name")
        if var.text not in INPUT_RANGES:
            raise ParseError(f"unknown variable {var.text!r}", var.line, var.col)
        cmp_tok = _expect(tokens, pos + 1, "'>' or '<'")
        if cmp_tok.text not in (GREATER, LESS):
            raise ParseError(f"expected '>' or '<', got {cmp_tok.text!r}",
                             cmp_tok.line, cmp_tok.col)
        low, high = INPUT_RANGES[var.text]
        num = _parse_number(_expect(tokens, pos + 2, "a threshold"), low, high,
                            "threshold")
        close = _expect(tokens, pos + 3, "')'")
        if close.text != ")":
            raise ParseError(f"expected ')', got {close.text!r}", close.line, close.col)
        return condition(var.text, cmp_tok.text, num), pos + 4
    if head.text == "act":
        target = _expect(tokens, pos, "'r'")
        if target.text != "r":
            raise ParseError(f"expected 'r', got {target.text!r}",
                             target.line, target.col)
        num = _parse_number(_expect(tokens, pos + 1, "a rudder setting"),
                            *RUDDER_RANGE, "rudder setting")
        close = _expect(tokens, pos + 2, "')'")
        if close.text != ")":
            raise ParseError(f"expected ')', got {close.text!r}", close.line, close.col)
        return action(num), pos + 3
    raise ParseError(f"unknown node type {head.text!r}", head.line, head.col)


def _warn_bounds(root: Node, max_depth: int, max_children: int) -> None:
    d = depth(root)
    if d > max_depth:
        warnings.warn(f"tree depth {d} exceeds the evolution bound {max_depth}",
                      TreeBoundsWarning, stacklevel=3)
    widest = max((len(n.children) for n in nodes_preorder(root)
                  if n.kind in COMPOSITE_KINDS), default=0)
    if widest > max_children:
        warnings.warn(
            f"composite with {widest} children exceeds the evolution bound "
            f"{max_children}", TreeBoundsWarning, stacklevel=3)


def serialize(tree: Node, compact: bool = False) -> str:
    """Render a tree in the text format; parse(serialize(t)) == t.

    The pretty form puts each composite child on its own indented line; the
    compact form is a single line (used inside checkpoint records).
    """
    index_nodes(tree)
    if compact:
        return _serialize_compact(tree)
    return "\n".join(_serialize_lines(tree, 0)) + "\n"


def _leaf_text(node: Node) -> str:
    if node.kind is NodeKind.CONDITION:
        return f"(cond {node.variable} {node.comparison} {node.threshold!r})"
    return f"(act r {node.rudder!r})"


def _serialize_compact(node: Node) -> str:
    if node.kind in COMPOSITE_KINDS:
        parts = [node.kind.value] + [_serialize_compact(c) for c in node.children]
        return "(" + " ".join(parts) + ")"
    return _leaf_text(node)


def _serialize_lines(node: Node, indent: int) -> list[str]:
    pad = "  " * indent
    if node.kind not in COMPOSITE_KINDS:
        return [pad + _leaf_text(node)]
    if not node.children:
        return [pad + f"({node.kind.value})"]
    lines = [pad + f"({node.kind.value}"]
    for child in node.children:
        lines.extend(_serialize_lines(child, indent + 1))
    lines[-1] += ")"
    return lines
