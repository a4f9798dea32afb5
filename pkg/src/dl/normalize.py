"""
Normalization passes over an ontology: negation normal form, flattening of
restriction fillers, and parts extraction.
"""
from __future__ import annotations

import logging

from src.dl.syntax import (
    BOTTOM,
    TOP,
    And,
    Atomic,
    AtomicPart,
    Bottom,
    ConceptExpr,
    Exists,
    Forall,
    Not,
    Ontology,
    Or,
    Part,
    RestrictionPart,
    SubClassOf,
    Top,
)

logger = logging.getLogger(__name__)

AUX_PREFIX = "_aux"


def to_nnf(e: ConceptExpr) -> ConceptExpr:
    """Push negation down to atomic concepts."""
    if isinstance(e, (Atomic, Top, Bottom)):
        return e
    if isinstance(e, And):
        return And(to_nnf(e.left), to_nnf(e.right))
    if isinstance(e, Or):
        return Or(to_nnf(e.left), to_nnf(e.right))
    if isinstance(e, Exists):
        return Exists(e.role, to_nnf(e.filler))
    if isinstance(e, Forall):
        return Forall(e.role, to_nnf(e.filler))
    if isinstance(e, Not):
        inner = e.operand
        if isinstance(inner, Atomic):
            return e
        if isinstance(inner, Top):
            return BOTTOM
        if isinstance(inner, Bottom):
            return TOP
        if isinstance(inner, Not):
            return to_nnf(inner.operand)
        if isinstance(inner, And):
            return Or(to_nnf(Not(inner.left)), to_nnf(Not(inner.right)))
        if isinstance(inner, Or):
            return And(to_nnf(Not(inner.left)), to_nnf(Not(inner.right)))
        if isinstance(inner, Exists):
            return Forall(inner.role, to_nnf(Not(inner.filler)))
        if isinstance(inner, Forall):
            return Exists(inner.role, to_nnf(Not(inner.filler)))
    raise TypeError(f"not a concept expression: {e!r}")


def nnf_ontology(onto: Ontology) -> Ontology:
    tbox = tuple(SubClassOf(to_nnf(ax.lhs), to_nnf(ax.rhs)) for ax in onto.tbox)
    return Ontology(onto.concepts, onto.roles, tbox)


class _Flattener:
    """
    Replaces every compound restriction filler with a fresh concept X.
    In positive position (right of ⊑) it adds ⊤ ⊑ ¬X ⊔ filler; in negative position
    (left of ⊑) it adds filler ⊑ X. Identical (filler, polarity) pairs share one name.
    """

    def __init__(self, onto: Ontology) -> None:
        self.taken = set(onto.concepts) | set(onto.roles)
        self.counter = 0
        self.names: dict[tuple[ConceptExpr, bool], str] = {}
        self.fresh: list[str] = []

    def _fresh_name(self) -> str:
        while f"{AUX_PREFIX}{self.counter}" in self.taken:
            self.counter += 1
        name = f"{AUX_PREFIX}{self.counter}"
        self.counter += 1
        self.taken.add(name)
        self.fresh.append(name)
        return name

    def rewrite(self, e: ConceptExpr, positive: bool, out: list[SubClassOf]) -> ConceptExpr:
        if isinstance(e, And):
            return And(self.rewrite(e.left, positive, out), self.rewrite(e.right, positive, out))
        if isinstance(e, Or):
            return Or(self.rewrite(e.left, positive, out), self.rewrite(e.right, positive, out))
        if isinstance(e, Not):
            return Not(self.rewrite(e.operand, not positive, out))
        if isinstance(e, (Exists, Forall)) and not isinstance(e.filler, Atomic):
            key = (e.filler, positive)
            name = self.names.get(key)
            pending: list[SubClassOf] = []
            if name is None:
                name = self._fresh_name()
                self.names[key] = name
                x = Atomic(name)
                pending.append(SubClassOf(TOP, Or(Not(x), e.filler)) if positive else SubClassOf(e.filler, x))
            out_expr = type(e)(e.role, Atomic(name))
            for ax in pending:
                self.axiom(ax, out)
            return out_expr
        return e

    def axiom(self, ax: SubClassOf, out: list[SubClassOf]) -> None:
        generated: list[SubClassOf] = []
        lhs = self.rewrite(ax.lhs, False, generated)
        rhs = self.rewrite(ax.rhs, True, generated)
        out.append(SubClassOf(lhs, rhs))
        out.extend(generated)


def flatten(onto: Ontology) -> Ontology:
    """Make every restriction filler atomic by introducing _auxN definitions."""
    f = _Flattener(onto)
    tbox: list[SubClassOf] = []
    for ax in onto.tbox:
        f.axiom(ax, tbox)
    if not f.fresh:
        return onto
    logger.debug("Flattening introduced %d auxiliary concepts", len(f.fresh))
    return Ontology(onto.concepts + tuple(f.fresh), onto.roles, tuple(tbox))


def normalize(onto: Ontology) -> Ontology:
    return flatten(nnf_ontology(onto))


def extract_parts(onto: Ontology) -> list[Part]:
    """Atomic concepts first (declaration order), then restrictions in first-occurrence order."""
    parts: list[Part] = [AtomicPart(c) for c in onto.concepts]
    seen: set[RestrictionPart] = set()
    for ax in onto.tbox:
        for side in (ax.lhs, ax.rhs):
            for node in side.walk():
                if isinstance(node, (Exists, Forall)):
                    part = RestrictionPart.of(node)
                    if part not in seen:
                        seen.add(part)
                        parts.append(part)
    return parts
