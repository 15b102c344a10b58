"""Rooted labelled trees and woods driving the expansion calculus.

A tree is a pair of maps: ``parent`` sending each node ``j >= 2`` to a node
``parent(j) < j``, and ``label`` sending every node to one of the five tags
``0, 1, 2, 1*, 2*``.  Woods are ordered tuples of trees.  The starred tags
mark *active* nodes, the sites where the one-step expansion operator may be
applied: expanding a wood at an active node destars that node in place and
appends three copies of its tree, each with one extra child (labelled 0, 1*
and 2* respectively) attached below the expanded node.

Everything here is an immutable value; all operations are pure functions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as _np


class NodeLabel(enum.Enum):
    ZERO = "0"
    ONE = "1"
    TWO = "2"
    ONE_STAR = "1*"
    TWO_STAR = "2*"

    @property
    def is_active(self) -> bool:
        return self in (NodeLabel.ONE_STAR, NodeLabel.TWO_STAR)

    @property
    def is_drift(self) -> bool:
        """Counts toward the unit weight of the order functional."""
        return self in (NodeLabel.ONE, NodeLabel.ONE_STAR)

    @property
    def is_diffusion(self) -> bool:
        """Counts toward the delta weight of the order functional."""
        return self in (NodeLabel.TWO, NodeLabel.TWO_STAR)

    def destarred(self) -> "NodeLabel":
        if self is NodeLabel.ONE_STAR:
            return NodeLabel.ONE
        if self is NodeLabel.TWO_STAR:
            return NodeLabel.TWO
        raise ValueError(f"label {self.value} carries no star")

    def __str__(self) -> str:
        return self.value


LABELS_BY_TEXT = {label.value: label for label in NodeLabel}


class TreeError(Exception):
    """Base class for tree-algebra failures."""


class NotActiveError(TreeError):
    """Raised when an expansion targets a node that is not starred."""


class OutOfRangeError(TreeError):
    """Raised when a (tree, node) pair does not index into the wood."""


class DegenerateTreeError(TreeError):
    """Raised when subtrees are requested from a single-node tree."""


class NoActiveTreeError(TreeError):
    """Raised when a wood order is requested but no tree is active."""


class ParseError(TreeError):
    """Wood text could not be parsed; carries position and expectation."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class STree:
    """Rooted tree with 1-based node ids.

    ``labels[k]`` is the label of node ``k + 1``; ``parents[k]`` is the
    parent of node ``k + 2``.  Node 1 is always the root.  Construction does
    not validate the parent map (so that :func:`validate` has something to
    diagnose); every other operation assumes a valid tree.
    """

    labels: tuple[NodeLabel, ...]
    parents: tuple[int, ...] = ()

    @staticmethod
    def single(label: NodeLabel) -> "STree":
        return STree(labels=(label,))

    @property
    def length(self) -> int:
        return len(self.labels)

    def label_of(self, node: int) -> NodeLabel:
        return self.labels[node - 1]

    def parent_of(self, node: int) -> int:
        return self.parents[node - 2]

    def children_of(self, node: int) -> tuple[int, ...]:
        return tuple(
            j for j in range(2, self.length + 1) if self.parents[j - 2] == node
        )

    @property
    def is_active(self) -> bool:
        return any(label.is_active for label in self.labels)

    def with_label(self, node: int, label: NodeLabel) -> "STree":
        labels = list(self.labels)
        labels[node - 1] = label
        return STree(labels=tuple(labels), parents=self.parents)

    def with_appended_child(self, parent: int, label: NodeLabel) -> "STree":
        """New tree with one extra node (id length+1) hanging below ``parent``."""
        return STree(labels=self.labels + (label,), parents=self.parents + (parent,))


@dataclass(frozen=True)
class SWood:
    trees: tuple[STree, ...]

    def __post_init__(self) -> None:
        if not self.trees:
            raise ValueError("a wood holds at least one tree")

    @property
    def length(self) -> int:
        return len(self.trees)

    def tree(self, index: int) -> STree:
        """1-based access, matching the active-node indexing convention."""
        return self.trees[index - 1]


class ActiveNode(NamedTuple):
    tree_index: int
    node_index: int


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def initial_wood() -> SWood:
    """The three-tree seed wood with root labels 0, 1*, 2*."""
    return SWood(
        trees=(
            STree.single(NodeLabel.ZERO),
            STree.single(NodeLabel.ONE_STAR),
            STree.single(NodeLabel.TWO_STAR),
        )
    )


def validate(tree: STree) -> ValidationResult:
    """Check the parent/label maps; the message names the first violation."""
    n = tree.length
    if n < 1:
        return ValidationResult(False, "tree has no nodes")
    if len(tree.parents) != n - 1:
        return ValidationResult(
            False,
            f"parent map covers {len(tree.parents)} nodes, expected {n - 1}",
        )
    for j in range(2, n + 1):
        p = tree.parents[j - 2]
        if not 1 <= p <= n:
            return ValidationResult(False, f"parent({j}) = {p} is not a node")
        if p >= j:
            return ValidationResult(False, f"parent(j) < j violated at j={j}")
    return ValidationResult(True)


def validate_wood(wood: SWood) -> ValidationResult:
    for i, tree in enumerate(wood.trees, start=1):
        result = validate(tree)
        if not result:
            return ValidationResult(False, f"tree {i}: {result.message}")
    return ValidationResult(True)


def active_nodes(wood: SWood) -> tuple[ActiveNode, ...]:
    """All starred (tree, node) pairs in lexicographic order."""
    found = []
    for i, tree in enumerate(wood.trees, start=1):
        for j, label in enumerate(tree.labels, start=1):
            if label.is_active:
                found.append(ActiveNode(i, j))
    return tuple(found)


def expand(wood: SWood, at: ActiveNode) -> SWood:
    """Apply the one-step expansion at an active node.

    The targeted tree is replaced in place by its destarred form and three
    modified copies of the original tree are appended, each with a new node
    (labelled 0, 1*, 2* in order) attached as a child of the expanded node.
    The result has three more trees than the input; the input is unchanged.
    """
    i, j = at
    if not 1 <= i <= wood.length:
        raise OutOfRangeError(f"tree index {i} outside wood of {wood.length} trees")
    tree = wood.tree(i)
    if not 1 <= j <= tree.length:
        raise OutOfRangeError(f"node index {j} outside tree of {tree.length} nodes")
    label = tree.label_of(j)
    if not label.is_active:
        raise NotActiveError(f"node ({i},{j}) carries label {label}, not 1* or 2*")
    relabelled = tree.with_label(j, label.destarred())
    appended = tuple(
        tree.with_appended_child(j, new_label)
        for new_label in (NodeLabel.ZERO, NodeLabel.ONE_STAR, NodeLabel.TWO_STAR)
    )
    trees = wood.trees[: i - 1] + (relabelled,) + wood.trees[i:] + appended
    return SWood(trees=trees)


def subtrees_with_nodes(tree: STree) -> list[tuple[STree, tuple[int, ...]]]:
    """Subtrees below the root, each paired with its original node ids.

    One subtree per root child, in increasing child order.  Nodes inside a
    subtree are renumbered 1..l following the increasing order of their
    original ids, which also puts the subtree root first.
    """
    if tree.length < 2:
        raise DegenerateTreeError("single-node tree has no subtrees")
    # Map every non-root node to the root child it descends from.
    anchor = {}
    for j in range(2, tree.length + 1):
        k = j
        while tree.parent_of(k) != 1:
            k = tree.parent_of(k)
        anchor[j] = k
    result = []
    for child in tree.children_of(1):
        members = tuple(sorted(j for j in anchor if anchor[j] == child))
        local = {orig: pos + 1 for pos, orig in enumerate(members)}
        labels = tuple(tree.label_of(orig) for orig in members)
        parents = tuple(local[tree.parent_of(orig)] for orig in members[1:])
        result.append((STree(labels=labels, parents=parents), members))
    return result


def subtrees(tree: STree) -> tuple[STree, ...]:
    return tuple(sub for sub, _ in subtrees_with_nodes(tree))


def assemble(root_label: NodeLabel, parts: tuple[STree, ...]) -> STree:
    """Inverse of :func:`subtrees` up to canonical node renumbering."""
    labels = [root_label]
    parents: list[int] = []
    for part in parts:
        offset = len(labels)
        labels.extend(part.labels)
        parents.append(1)
        for j in range(2, part.length + 1):
            parents.append(part.parent_of(j) + offset)
    return STree(labels=tuple(labels), parents=tuple(parents))


# --------------------------------------------------------------------------
# Order functional
# --------------------------------------------------------------------------

#: A linear form n1*1 + n0*gamma + n2*delta as integer counts.
OrderTriple = tuple[int, int, int]

ROOT_ZERO_TRIPLE: OrderTriple = (0, 1, 0)


@dataclass(frozen=True)
class OrderValue:
    """Order of one tree, kept symbolic as label counts.

    When the root carries label 0 the order is gamma regardless of the other
    nodes; otherwise it is n1 + n0*gamma + n2*delta.
    """

    n1: int
    n0: int
    n2: int
    root_is_zero: bool

    @property
    def triple(self) -> OrderTriple:
        if self.root_is_zero:
            return ROOT_ZERO_TRIPLE
        return (self.n1, self.n0, self.n2)

    def evaluate(self, gamma: float, delta: float) -> float:
        _check_exponents(gamma, delta)
        n1, n0, n2 = self.triple
        return n1 + n0 * gamma + n2 * delta


def _check_exponents(gamma: float, delta: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0.0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 1/2], got {delta}")


def order_tree(tree: STree) -> OrderValue:
    if tree.label_of(1) is NodeLabel.ZERO:
        return OrderValue(0, 0, 0, root_is_zero=True)
    n1 = sum(1 for label in tree.labels if label.is_drift)
    n0 = sum(1 for label in tree.labels if label is NodeLabel.ZERO)
    n2 = sum(1 for label in tree.labels if label.is_diffusion)
    return OrderValue(n1, n0, n2, root_is_zero=False)


def _triple_value(triple: OrderTriple, gamma, delta):
    n1, n0, n2 = triple
    return n1 + n0 * gamma + n2 * delta


# Probe grid over 0 < gamma < 1, 0 < delta <= 1/2.  All coordinates are
# binary fractions, so float evaluation of the integer-count linear forms is
# exact and min-comparisons are reliable.
_PROBE_GAMMA, _PROBE_DELTA = (
    arr.ravel()
    for arr in _np.meshgrid(
        _np.arange(1, 32) / 32.0, _np.arange(1, 33) / 64.0, indexing="ij"
    )
)


def _prune_triples(triples: frozenset[OrderTriple]) -> frozenset[OrderTriple]:
    """Drop candidates that are nowhere strictly below the min of the rest."""
    kept = sorted(triples)
    values = _np.array(
        [n1 + n0 * _PROBE_GAMMA + n2 * _PROBE_DELTA for n1, n0, n2 in kept]
    )
    keep_mask = [True] * len(kept)
    for index in range(len(kept)):
        if sum(keep_mask) == 1:
            break
        others = [
            k for k in range(len(kept)) if keep_mask[k] and k != index
        ]
        if _np.all(values[others].min(axis=0) <= values[index]):
            keep_mask[index] = False
    return frozenset(t for t, keep in zip(kept, keep_mask) if keep)


def _render_triple(triple: OrderTriple) -> str:
    n1, n0, n2 = triple
    parts = []
    if n1:
        parts.append(str(n1))
    if n0:
        parts.append("γ" if n0 == 1 else f"{n0}γ")
    if n2:
        parts.append("δ" if n2 == 1 else f"{n2}δ")
    return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class WoodOrder:
    """Order of a wood: the pointwise minimum over its active trees.

    ``candidates`` keeps one linear form per active tree; ``minimal``
    is the same set with forms that can never attain the minimum removed,
    which is the canonical object for symbolic comparisons.
    """

    candidates: tuple[tuple[int, OrderTriple], ...]  # (tree index, form)

    @property
    def minimal(self) -> frozenset[OrderTriple]:
        return _prune_triples(frozenset(t for _, t in self.candidates))

    def evaluate(self, gamma: float, delta: float) -> float:
        _check_exponents(gamma, delta)
        return min(_triple_value(t, gamma, delta) for _, t in self.candidates)

    def argmin_tree(self, gamma: float, delta: float) -> int:
        """1-based index of the first active tree attaining the minimum."""
        _check_exponents(gamma, delta)
        best = self.evaluate(gamma, delta)
        for index, triple in self.candidates:
            if _triple_value(triple, gamma, delta) == best:
                return index
        raise AssertionError("minimum not attained by any candidate")

    def symbolic(self) -> str:
        forms = sorted(self.minimal)
        if len(forms) == 1:
            return _render_triple(forms[0])
        common = tuple(min(f[k] for f in forms) for k in range(3))
        rest = [tuple(f[k] - common[k] for k in range(3)) for f in forms]
        inner = ", ".join(sorted(_render_triple(r) for r in rest))
        if any(common):
            return f"{_render_triple(common)} + min({inner})"
        return f"min({inner})"


def order_wood(wood: SWood) -> WoodOrder:
    candidates = tuple(
        (i, order_tree(tree).triple)
        for i, tree in enumerate(wood.trees, start=1)
        if tree.is_active
    )
    if not candidates:
        raise NoActiveTreeError("wood has no active tree; its order is undefined")
    return WoodOrder(candidates=candidates)


# --------------------------------------------------------------------------
# Text format
# --------------------------------------------------------------------------
#
# Wood text: trees separated by ';', each tree a parenthesised walk where a
# node is its label optionally followed by '[child,child,...]'.  Example:
# (0);(1*);(2);(2*[0]);(2*[1*]);(2*[2*]).  Parsing assigns node ids in
# preorder, so serialize . parse canonicalises the numbering; all woods
# reachable in the worked examples are already in that canonical form.


def serialize_tree(tree: STree) -> str:
    def walk(node: int) -> str:
        text = str(tree.label_of(node))
        children = tree.children_of(node)
        if children:
            text += "[" + ",".join(walk(c) for c in children) + "]"
        return text

    return "(" + walk(1) + ")"


def serialize(wood: SWood) -> str:
    return ";".join(serialize_tree(t) for t in wood.trees)


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _position(self) -> tuple[int, int]:
        consumed = self.text[: self.pos]
        line = consumed.count("\n") + 1
        column = self.pos - (consumed.rfind("\n") + 1) + 1
        return line, column

    def error(self, message: str) -> ParseError:
        line, column = self._position()
        return ParseError(message, line, column)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        if self.peek() != char:
            found = self.peek() or "end of input"
            raise self.error(f"expected '{char}', found {found!r}")
        self.pos += 1

    def label(self) -> NodeLabel:
        self.skip_ws()
        for text in ("1*", "2*", "0", "1", "2"):
            if self.text.startswith(text, self.pos):
                self.pos += len(text)
                return LABELS_BY_TEXT[text]
        found = self.peek() or "end of input"
        raise self.error(f"expected a label in {{0,1,2,1*,2*}}, found {found!r}")

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse(text: str) -> SWood:
    """Parse wood text; raises :class:`ParseError` with position info."""
    scanner = _Scanner(text)
    trees = [_parse_tree(scanner)]
    while not scanner.at_end():
        scanner.expect(";")
        trees.append(_parse_tree(scanner))
    return SWood(trees=tuple(trees))


def _parse_tree(scanner: _Scanner) -> STree:
    scanner.expect("(")
    labels: list[NodeLabel] = []
    parents: list[int] = []

    def node(parent: int) -> None:
        labels.append(scanner.label())
        this = len(labels)
        if parent:
            parents.append(parent)
        if scanner.peek() == "[":
            scanner.expect("[")
            node(this)
            while scanner.peek() == ",":
                scanner.expect(",")
                node(this)
            scanner.expect("]")

    node(0)
    scanner.expect(")")
    return STree(labels=tuple(labels), parents=tuple(parents))


def reachable_woods(depth: int) -> Iterator[SWood]:
    """Every wood obtainable from the seed by at most ``depth`` expansions.

    Exhaustive breadth-first walk; woods are compared positionally, so
    expansion sequences that commute to different tree orders count as
    distinct.  Only usable for small depths.
    """
    frontier = [initial_wood()]
    seen = set(frontier)
    yield frontier[0]
    for _ in range(depth):
        next_frontier = []
        for wood in frontier:
            for node in active_nodes(wood):
                grown = expand(wood, node)
                if grown not in seen:
                    seen.add(grown)
                    next_frontier.append(grown)
                    yield grown
        frontier = next_frontier
