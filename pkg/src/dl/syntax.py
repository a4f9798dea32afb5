"""
ALCI abstract syntax: roles, concept expressions, axioms, ontologies and parts.
All nodes are frozen dataclasses, so structural equality and hashing come for free.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from src.errors import UnknownNameError


@dataclass(frozen=True)
class RoleExpr:
    """An atomic role or its inverse. (R⁻)⁻ is R by construction: inversion flips the flag."""

    name: str
    inverted: bool = False

    def inverse(self) -> RoleExpr:
        return RoleExpr(self.name, not self.inverted)

    def __str__(self) -> str:
        return f"inv({self.name})" if self.inverted else self.name


@dataclass(frozen=True)
class ConceptExpr:
    def children(self) -> tuple[ConceptExpr, ...]:
        return ()

    def is_nnf(self) -> bool:
        return all(c.is_nnf() for c in self.children())

    def is_flat(self) -> bool:
        return all(c.is_flat() for c in self.children())

    def walk(self) -> Iterator[ConceptExpr]:
        """Pre-order, left to right."""
        yield self
        for c in self.children():
            yield from c.walk()


@dataclass(frozen=True)
class Atomic(ConceptExpr):
    name: str


@dataclass(frozen=True)
class Top(ConceptExpr):
    pass


@dataclass(frozen=True)
class Bottom(ConceptExpr):
    pass


@dataclass(frozen=True)
class Not(ConceptExpr):
    operand: ConceptExpr

    def children(self) -> tuple[ConceptExpr, ...]:
        return (self.operand,)

    def is_nnf(self) -> bool:
        return isinstance(self.operand, Atomic)


@dataclass(frozen=True)
class And(ConceptExpr):
    left: ConceptExpr
    right: ConceptExpr

    def children(self) -> tuple[ConceptExpr, ...]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Or(ConceptExpr):
    left: ConceptExpr
    right: ConceptExpr

    def children(self) -> tuple[ConceptExpr, ...]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Exists(ConceptExpr):
    role: RoleExpr
    filler: ConceptExpr

    def children(self) -> tuple[ConceptExpr, ...]:
        return (self.filler,)

    def is_flat(self) -> bool:
        return isinstance(self.filler, Atomic)


@dataclass(frozen=True)
class Forall(ConceptExpr):
    role: RoleExpr
    filler: ConceptExpr

    def children(self) -> tuple[ConceptExpr, ...]:
        return (self.filler,)

    def is_flat(self) -> bool:
        return isinstance(self.filler, Atomic)


Restriction = Union[Exists, Forall]

TOP = Top()
BOTTOM = Bottom()


def or_all(items: list[ConceptExpr]) -> ConceptExpr:
    """Left-nested disjunction of a non-empty list."""
    out = items[0]
    for item in items[1:]:
        out = Or(out, item)
    return out


def concept_names(e: ConceptExpr) -> Iterator[str]:
    for node in e.walk():
        if isinstance(node, Atomic):
            yield node.name


def role_names(e: ConceptExpr) -> Iterator[str]:
    for node in e.walk():
        if isinstance(node, (Exists, Forall)):
            yield node.role.name


# ---- axioms ----


@dataclass(frozen=True)
class SubClassOf:
    lhs: ConceptExpr
    rhs: ConceptExpr


@dataclass(frozen=True)
class EquivalentTo:
    lhs: ConceptExpr
    rhs: ConceptExpr

    def expand(self) -> tuple[SubClassOf, SubClassOf]:
        return SubClassOf(self.lhs, self.rhs), SubClassOf(self.rhs, self.lhs)


@dataclass(frozen=True)
class ConceptAssertion:
    concept: str
    individual: str


@dataclass(frozen=True)
class RoleAssertion:
    role: RoleExpr
    subject: str
    object: str


Assertion = Union[ConceptAssertion, RoleAssertion]


@dataclass(frozen=True)
class Ontology:
    """A TBox with its signature. Declaration order of concepts and roles is kept."""

    concepts: tuple[str, ...] = ()
    roles: tuple[str, ...] = ()
    tbox: tuple[SubClassOf, ...] = ()

    def __post_init__(self) -> None:
        known_c = set(self.concepts)
        known_r = set(self.roles)
        for ax in self.tbox:
            for side in (ax.lhs, ax.rhs):
                for name in concept_names(side):
                    if name not in known_c:
                        raise UnknownNameError(f"concept {name!r} used in tbox but not declared")
                for name in role_names(side):
                    if name not in known_r:
                        raise UnknownNameError(f"role {name!r} used in tbox but not declared")


@dataclass(frozen=True)
class KnowledgeGraphInput:
    individuals: tuple[str, ...] = ()
    abox: tuple[Assertion, ...] = ()

    def validate(self, onto: Ontology) -> None:
        known = set(self.individuals)
        for a in self.abox:
            if isinstance(a, ConceptAssertion):
                names = (a.individual,)
                if a.concept not in onto.concepts:
                    raise UnknownNameError(f"concept {a.concept!r} in assertion is not declared")
            else:
                names = (a.subject, a.object)
                if a.role.name not in onto.roles:
                    raise UnknownNameError(f"role {a.role.name!r} in assertion is not declared")
            for n in names:
                if n not in known:
                    raise UnknownNameError(f"individual {n!r} is not declared")

    def concepts_of(self, individual: str) -> list[str]:
        return [a.concept for a in self.abox if isinstance(a, ConceptAssertion) and a.individual == individual]


# ---- parts ----


@dataclass(frozen=True)
class AtomicPart:
    concept: str

    @property
    def expr(self) -> ConceptExpr:
        return Atomic(self.concept)

    def __str__(self) -> str:
        return self.concept


@dataclass(frozen=True)
class RestrictionPart:
    quantifier: str  # "forall" | "exists"
    role: RoleExpr
    filler: str

    @property
    def expr(self) -> ConceptExpr:
        cls = Forall if self.quantifier == "forall" else Exists
        return cls(self.role, Atomic(self.filler))

    @classmethod
    def of(cls, e: Restriction) -> RestrictionPart:
        assert isinstance(e.filler, Atomic), "restriction parts need atomic fillers"
        return cls("forall" if isinstance(e, Forall) else "exists", e.role, e.filler.name)

    def __str__(self) -> str:
        sym = "∀" if self.quantifier == "forall" else "∃"
        role = f"{self.role.name}⁻" if self.role.inverted else self.role.name
        return f"{sym}{role}.{self.filler}"


Part = Union[AtomicPart, RestrictionPart]
