"""Symbolic integral-term expressions attached to trees and woods.

Terms are built from two operator families: the plain processes ``I^0_j``
(j in {0, 1, 2, 1*, 2*}) and the multilinear integrals ``I^i_j[g_1,...,g_i]``
(i >= 1, j in {1, 2, 1*, 2*}).  A starred subscript marks a term that still
depends on the solution path and therefore admits the four-way expansion

    I^i_{k*}[gs] -> I^i_k[gs] + I^{i+1}_{k*}[I^0_0, gs]
                             + I^{i+1}_{k*}[I^0_{1*}, gs]
                             + I^{i+1}_{k*}[I^0_{2*}, gs]

(with the i = 0 case reading the same way).  Applying that rewrite at the
slot addressed by an active tree node reproduces exactly the term set of the
expanded wood, which is the identity the test suite checks term-by-term.

Sums are flat and canonically ordered; multilinear arguments are sorted,
reflecting the symmetry of the operators.  Canonical forms make equality of
term sets a structural comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

from .trees import ActiveNode, NodeLabel, STree, SWood, subtrees_with_nodes

TermExpr = Union["I0", "In", "TermSum"]

#: Path into a term: summand index first (when the root is a sum), then one
#: argument index per multilinear layer.
TermPath = tuple[int, ...]


class TermErrorBase(Exception):
    pass


class NotStarredError(TermErrorBase):
    """The addressed subterm does not carry a starred subscript."""


class BadPathError(TermErrorBase):
    """A path does not address a subterm of the expression."""


@dataclass(frozen=True)
class I0:
    j: NodeLabel

    @property
    def is_starred(self) -> bool:
        return self.j.is_active


@dataclass(frozen=True)
class In:
    order: int
    j: NodeLabel
    args: tuple[TermExpr, ...]

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("multilinear order must be >= 1")
        if self.j is NodeLabel.ZERO:
            raise ValueError("I^i_0 is not an operator for i >= 1")
        if len(self.args) != self.order:
            raise ValueError(
                f"I^{self.order}_{self.j} expects {self.order} arguments, "
                f"got {len(self.args)}"
            )

    @property
    def is_starred(self) -> bool:
        return self.j.is_active


@dataclass(frozen=True)
class TermSum:
    terms: tuple[TermExpr, ...]


@dataclass(frozen=True)
class RewriteStep:
    """One application of the expansion identity: where, and what replaced it."""

    target: TermPath
    replaced: TermExpr
    replacement: tuple[TermExpr, ...]


def integral(order: int, j: NodeLabel, args: tuple[TermExpr, ...] = ()) -> TermExpr:
    """Canonical operator constructor; sorts multilinear arguments."""
    if order == 0:
        if args:
            raise ValueError("I^0 takes no arguments")
        return I0(j)
    return In(order=order, j=j, args=tuple(sorted(args, key=render_compact)))


def term_sum(terms) -> TermExpr:
    """Flat, canonically ordered sum; singletons collapse to the bare term."""
    flat: list[TermExpr] = []
    for term in terms:
        if isinstance(term, TermSum):
            flat.extend(term.terms)
        else:
            flat.append(term)
    flat.sort(key=render_compact)
    if len(flat) == 1:
        return flat[0]
    return TermSum(terms=tuple(flat))


def summands(expr: TermExpr) -> tuple[TermExpr, ...]:
    if isinstance(expr, TermSum):
        return expr.terms
    return (expr,)


def render(expr: TermExpr, style: str = "compact") -> str:
    if style == "compact":
        return render_compact(expr)
    if style == "latex":
        return _render_latex(expr)
    raise ValueError(f"unknown render style {style!r}")


def render_compact(expr: TermExpr) -> str:
    if isinstance(expr, I0):
        return f"I^0_{expr.j}"
    if isinstance(expr, In):
        inner = ",".join(render_compact(a) for a in expr.args)
        return f"I^{expr.order}_{expr.j}[{inner}]"
    if not expr.terms:
        return "0"
    return " + ".join(render_compact(t) for t in expr.terms)


_LATEX_SUBSCRIPT = {
    NodeLabel.ZERO: "0",
    NodeLabel.ONE: "1",
    NodeLabel.TWO: "2",
    NodeLabel.ONE_STAR: "1^*",
    NodeLabel.TWO_STAR: "2^*",
}


def _render_latex(expr: TermExpr) -> str:
    if isinstance(expr, I0):
        return f"I^{{0}}_{{{_LATEX_SUBSCRIPT[expr.j]}}}"
    if isinstance(expr, In):
        inner = ", ".join(_render_latex(a) for a in expr.args)
        return f"I^{{{expr.order}}}_{{{_LATEX_SUBSCRIPT[expr.j]}}}[{inner}]"
    if not expr.terms:
        return "0"
    return " + ".join(_render_latex(t) for t in expr.terms)


def contains_starred(expr: TermExpr) -> bool:
    if isinstance(expr, I0):
        return expr.is_starred
    if isinstance(expr, In):
        return expr.is_starred or any(contains_starred(a) for a in expr.args)
    return any(contains_starred(t) for t in expr.terms)


# --------------------------------------------------------------------------
# Tree -> term maps
# --------------------------------------------------------------------------


def phi(tree: STree) -> TermExpr:
    """Term of one tree: ``I^0_k`` at the base, multilinear recursion above.

    The base case fires when the root label is 0 or the tree is a single
    node; otherwise the root label indexes the operator and the subtrees
    supply the arguments.
    """
    k = tree.label_of(1)
    if k is NodeLabel.ZERO or tree.length == 1:
        return I0(k)
    parts = [phi(sub) for sub, _ in subtrees_with_nodes(tree)]
    return integral(len(parts), k, tuple(parts))


def psi_tree(tree: STree) -> TermExpr | None:
    """Computable part of a tree's term: dropped entirely when active."""
    if tree.is_active:
        return None
    return phi(tree)


def phi_wood(wood: SWood) -> TermExpr:
    return term_sum(phi(tree) for tree in wood.trees)


def psi(wood: SWood) -> TermExpr:
    kept = [term for term in (psi_tree(t) for t in wood.trees) if term is not None]
    return term_sum(kept)


def phi_with_slot(tree: STree, node: int) -> tuple[TermExpr, TermPath]:
    """Term of ``tree`` plus the path to the subterm owned by ``node``.

    Only nodes that actually surface in the term are addressable: below a
    0-labelled root the recursion short-circuits and inner nodes have no
    slot.  Woods built by repeated expansion never hide active nodes that
    way (0-labelled nodes stay leaves there).
    """
    if not 1 <= node <= tree.length:
        raise BadPathError(f"node {node} outside tree of {tree.length} nodes")
    if node == 1:
        return phi(tree), ()
    k = tree.label_of(1)
    if k is NodeLabel.ZERO:
        raise BadPathError("nodes below a 0-labelled root have no term slot")
    parts = subtrees_with_nodes(tree)
    arg_terms = []
    home = None
    for index, (sub, members) in enumerate(parts):
        if node in members:
            local = members.index(node) + 1
            sub_term, sub_path = phi_with_slot(sub, local)
            home = (index, sub_path)
            arg_terms.append(sub_term)
        else:
            arg_terms.append(phi(sub))
    assert home is not None
    order = sorted(range(len(arg_terms)), key=lambda i: render_compact(arg_terms[i]))
    slot = order.index(home[0])
    term = In(order=len(arg_terms), j=k, args=tuple(arg_terms[i] for i in order))
    return term, (slot,) + home[1]


def wood_slot(wood: SWood, at: ActiveNode) -> TermPath:
    """Path inside ``phi_wood(wood)`` addressing the starred slot of ``at``."""
    term, path = phi_with_slot(wood.tree(at.tree_index), at.node_index)
    total = phi_wood(wood)
    if isinstance(total, TermSum):
        index = total.terms.index(term)
        return (index,) + path
    return path


# --------------------------------------------------------------------------
# Rewrite
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _seed_arguments() -> tuple[TermExpr, ...]:
    return (
        I0(NodeLabel.ZERO),
        I0(NodeLabel.ONE_STAR),
        I0(NodeLabel.TWO_STAR),
    )


def expansion_of(term: TermExpr) -> tuple[TermExpr, ...]:
    """The four-term replacement of a starred operator."""
    if isinstance(term, I0):
        if not term.is_starred:
            raise NotStarredError(f"{render_compact(term)} is not starred")
        destarred: TermExpr = I0(term.j.destarred())
        grown = tuple(integral(1, term.j, (seed,)) for seed in _seed_arguments())
        return (destarred,) + grown
    if isinstance(term, In):
        if not term.is_starred:
            raise NotStarredError(f"{render_compact(term)} is not starred")
        destarred = integral(term.order, term.j.destarred(), term.args)
        grown = tuple(
            integral(term.order + 1, term.j, (seed,) + term.args)
            for seed in _seed_arguments()
        )
        return (destarred,) + grown
    raise NotStarredError("a sum cannot be expanded; address one of its terms")


def _rewrite_term(term: TermExpr, path: TermPath) -> tuple[TermExpr, ...]:
    if not path:
        return expansion_of(term)
    if not isinstance(term, In):
        raise BadPathError(f"path descends into {render_compact(term)}")
    index = path[0]
    if not 0 <= index < term.order:
        raise BadPathError(f"argument index {index} out of range")
    replacements = _rewrite_term(term.args[index], path[1:])
    out = []
    for rep in replacements:
        args = term.args[:index] + (rep,) + term.args[index + 1 :]
        out.append(integral(term.order, term.j, args))
    return tuple(out)


def subterm_at(expr: TermExpr, path: TermPath) -> TermExpr:
    node = expr
    for index in path:
        if isinstance(node, TermSum):
            parts: tuple[TermExpr, ...] = node.terms
        elif isinstance(node, In):
            parts = node.args
        else:
            raise BadPathError(f"path descends into {render_compact(node)}")
        if not 0 <= index < len(parts):
            raise BadPathError(f"index {index} out of range at {path}")
        node = parts[index]
    return node


def describe_rewrite(expr: TermExpr, path: TermPath) -> RewriteStep:
    """The rewrite at ``path`` as a record, without applying it."""
    target = subterm_at(expr, path)
    return RewriteStep(target=path, replaced=target, replacement=expansion_of(target))


def rewrite_expand(expr: TermExpr, path: TermPath) -> TermExpr:
    """Expand the starred subterm at ``path``; multilinearity keeps sums flat.

    The addressed subterm is replaced by its four-term expansion; every
    enclosing multilinear layer distributes over the replacement, so one
    summand of the input becomes four summands of the canonical output.
    """
    if isinstance(expr, TermSum):
        if not path:
            raise NotStarredError("a sum cannot be expanded; address one of its terms")
        index = path[0]
        if not 0 <= index < len(expr.terms):
            raise BadPathError(f"summand index {index} out of range")
        replaced = _rewrite_term(expr.terms[index], path[1:])
        return term_sum(expr.terms[:index] + replaced + expr.terms[index + 1 :])
    return term_sum(_rewrite_term(expr, path))


def expansion_matches_rewrite(wood: SWood, at: ActiveNode, expanded: SWood) -> bool:
    """Term-level identity check: expanding the wood and rewriting its term
    set at the corresponding slot must produce the same canonical sum."""
    path = wood_slot(wood, at)
    return phi_wood(expanded) == rewrite_expand(phi_wood(wood), path)


def required_derivative_orders(expr: TermExpr) -> dict[str, frozenset[int]]:
    """Derivative orders of the drift (F) and diffusion (B) an evaluator needs.

    ``I^0_1``/``I^0_2`` need the order-0 maps; ``I^i_j`` needs order ``i``.
    The starred operators are excluded by construction wherever this is
    called on computable terms, but counting them would be identical.
    """
    drift: set[int] = set()
    diffusion: set[int] = set()

    def visit(term: TermExpr) -> None:
        if isinstance(term, I0):
            if term.j in (NodeLabel.ONE, NodeLabel.ONE_STAR):
                drift.add(0)
            elif term.j in (NodeLabel.TWO, NodeLabel.TWO_STAR):
                diffusion.add(0)
            return
        if isinstance(term, In):
            if term.j in (NodeLabel.ONE, NodeLabel.ONE_STAR):
                drift.add(term.order)
            else:
                diffusion.add(term.order)
            for arg in term.args:
                visit(arg)
            return
        for part in term.terms:
            visit(part)

    visit(expr)
    return {"F": frozenset(drift), "B": frozenset(diffusion)}


__all__ = [
    "TermExpr",
    "TermPath",
    "I0",
    "In",
    "TermSum",
    "RewriteStep",
    "NotStarredError",
    "BadPathError",
    "integral",
    "subterm_at",
    "describe_rewrite",
    "term_sum",
    "summands",
    "render",
    "render_compact",
    "contains_starred",
    "phi",
    "psi_tree",
    "phi_wood",
    "psi",
    "phi_with_slot",
    "wood_slot",
    "expansion_of",
    "rewrite_expand",
    "expansion_matches_rewrite",
    "required_derivative_orders",
]
