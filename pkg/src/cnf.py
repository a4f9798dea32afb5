"""
Domino variable space, characteristic boolean function, and the CNF encoding of
the initial domino set. DIMACS and varmap.tsv readers/writers live here too.

A domino vector is laid out [parts side 1][role keys][parts side 2], so it reads
as the subject / roles / object concatenation. In the default mode R and inv(R)
share one variable; with split_inverses each gets its own and the two are tied
by implication clauses.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from src.dl.parser import render_concept
from src.dl.syntax import (
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
    RoleExpr,
    Top,
)
from src.errors import SchemaError, UnknownNameError

logger = logging.getLogger(__name__)

DominoVector = np.ndarray  # uint8 bits, length VarMap.total


# ---- variable map ----


@dataclass(frozen=True)
class VarMap:
    parts: tuple[Part, ...]
    role_keys: tuple[RoleExpr, ...]
    split_inverses: bool = False
    _part_index: dict[Part, int] = field(init=False, repr=False, compare=False)
    _role_index: dict[RoleExpr, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_part_index", {p: i for i, p in enumerate(self.parts)})
        object.__setattr__(self, "_role_index", {r: i for i, r in enumerate(self.role_keys)})

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    @property
    def total(self) -> int:
        return 2 * len(self.parts) + len(self.role_keys)

    def key(self, role: RoleExpr) -> RoleExpr:
        return role if self.split_inverses else RoleExpr(role.name)

    def tied_keys(self, role: RoleExpr) -> tuple[RoleExpr, ...]:
        """Role keys that hold together with `role` in every domino (R and R- when split)."""
        if self.split_inverses:
            return (role, role.inverse())
        return (self.key(role),)

    def part_var(self, part: Part, side: int) -> int:
        try:
            i = self._part_index[part]
        except KeyError:
            raise UnknownNameError(f"part {part} is not in the variable map") from None
        if side == 1:
            return i
        if side == 2:
            return len(self.parts) + len(self.role_keys) + i
        raise ValueError(f"side must be 1 or 2, got {side}")

    def role_var(self, role: RoleExpr) -> int:
        try:
            return len(self.parts) + self._role_index[self.key(role)]
        except KeyError:
            raise UnknownNameError(f"role {role} is not in the variable map") from None

    def side_block(self, side: int) -> list[int]:
        return [self.part_var(p, side) for p in self.parts]

    def role_block(self) -> list[int]:
        return list(range(len(self.parts), len(self.parts) + len(self.role_keys)))

    def atomic_vars(self, concepts: Sequence[str], side: int) -> list[int]:
        return [self.part_var(AtomicPart(c), side) for c in concepts]

    def label_vars(self, concepts: Sequence[str]) -> list[int]:
        """Subject atomic concepts, role keys, object atomic concepts."""
        return self.atomic_vars(concepts, 1) + self.role_block() + self.atomic_vars(concepts, 2)

    def describe(self) -> list[tuple[int, str, str, str]]:
        """(index, kind, name, side) rows in index order."""
        rows: list[tuple[int, str, str, str]] = []
        for side in (1, 2):
            for p in self.parts:
                kind = "concept" if isinstance(p, AtomicPart) else "restriction"
                rows.append((self.part_var(p, side), kind, part_label(p), str(side)))
        for r in self.role_keys:
            rows.append((self.role_var(r), "role", str(r), "-"))
        return sorted(rows)

    def names(self) -> list[str]:
        """Column names for assignment files."""
        return [name if side == "-" else f"{name}@{side}" for _, _, name, side in self.describe()]

    def vector(
        self,
        subject: Iterable[Part] = (),
        roles: Iterable[RoleExpr] = (),
        obj: Iterable[Part] = (),
    ) -> DominoVector:
        x = np.zeros(self.total, dtype=np.uint8)
        for p in subject:
            x[self.part_var(p, 1)] = 1
        for r in roles:
            for k in self.tied_keys(r):
                x[self.role_var(k)] = 1
        for p in obj:
            x[self.part_var(p, 2)] = 1
        return x


def part_label(p: Part) -> str:
    return p.concept if isinstance(p, AtomicPart) else render_concept(p.expr)


def build_varmap(onto: Ontology, parts: Sequence[Part], split_inverses: bool = False) -> VarMap:
    if split_inverses:
        keys = tuple(k for r in onto.roles for k in (RoleExpr(r), RoleExpr(r, True)))
    else:
        keys = tuple(RoleExpr(r) for r in onto.roles)
    return VarMap(tuple(parts), keys, split_inverses)


# ---- propositional formulas ----


@dataclass(frozen=True)
class Lit:
    var: int
    positive: bool = True


@dataclass(frozen=True)
class PTrue:
    pass


@dataclass(frozen=True)
class PFalse:
    pass


@dataclass(frozen=True)
class PAnd:
    items: tuple[PropFormula, ...]


@dataclass(frozen=True)
class POr:
    items: tuple[PropFormula, ...]


PropFormula = Union[Lit, PTrue, PFalse, PAnd, POr]
TRUE = PTrue()
FALSE = PFalse()


def _gather(items: Iterable[PropFormula], same: type, unit: PropFormula, zero: PropFormula) -> list[PropFormula]:
    out: list[PropFormula] = []
    for f in items:
        if f == unit:
            continue
        if f == zero:
            return [zero]
        for g in f.items if isinstance(f, same) else (f,):
            if g not in out:
                out.append(g)
    return out


def conj(*items: PropFormula) -> PropFormula:
    flat = _gather(items, PAnd, TRUE, FALSE)
    if not flat:
        return TRUE
    return flat[0] if len(flat) == 1 else PAnd(tuple(flat))


def disj(*items: PropFormula) -> PropFormula:
    flat = _gather(items, POr, FALSE, TRUE)
    if not flat:
        return FALSE
    return flat[0] if len(flat) == 1 else POr(tuple(flat))


def neg(f: PropFormula) -> PropFormula:
    if isinstance(f, Lit):
        return Lit(f.var, not f.positive)
    if isinstance(f, PTrue):
        return FALSE
    if isinstance(f, PFalse):
        return TRUE
    if isinstance(f, PAnd):
        return disj(*(neg(g) for g in f.items))
    return conj(*(neg(g) for g in f.items))


def implies(a: PropFormula, b: PropFormula) -> PropFormula:
    return disj(neg(a), b)


def evaluate_formula(f: PropFormula, bits: Sequence[int]) -> bool:
    if isinstance(f, Lit):
        return bool(bits[f.var]) == f.positive
    if isinstance(f, PTrue):
        return True
    if isinstance(f, PFalse):
        return False
    if isinstance(f, PAnd):
        return all(evaluate_formula(g, bits) for g in f.items)
    return any(evaluate_formula(g, bits) for g in f.items)


def cbf(x: Union[ConceptExpr, RoleExpr], side: int, vm: VarMap) -> PropFormula:
    """Characteristic boolean function of a concept (on a side) or a role."""
    if isinstance(x, RoleExpr):
        return Lit(vm.role_var(x))
    if isinstance(x, Top):
        return TRUE
    if isinstance(x, Bottom):
        return FALSE
    if isinstance(x, Atomic):
        return Lit(vm.part_var(AtomicPart(x.name), side))
    if isinstance(x, (Exists, Forall)):
        return Lit(vm.part_var(RestrictionPart.of(x), side))
    if isinstance(x, Not):
        return neg(cbf(x.operand, side, vm))
    if isinstance(x, And):
        return conj(cbf(x.left, side, vm), cbf(x.right, side, vm))
    if isinstance(x, Or):
        return disj(cbf(x.left, side, vm), cbf(x.right, side, vm))
    raise TypeError(f"cannot encode {x!r}")


def source_side(role: RoleExpr) -> int:
    """Side holding the individual a restriction over `role` talks about."""
    return 2 if role.inverted else 1


def target_side(role: RoleExpr) -> int:
    return 1 if role.inverted else 2


def d0_formulas(onto: Ontology, parts: Sequence[Part], vm: VarMap) -> list[PropFormula]:
    """The conjuncts of the initial domino set: axioms, universal, existential and inverse constraints."""
    out: list[PropFormula] = []
    for ax in onto.tbox:
        for side in (1, 2):
            out.append(disj(neg(cbf(ax.lhs, side, vm)), cbf(ax.rhs, side, vm)))
    for p in parts:
        if not isinstance(p, RestrictionPart):
            continue
        src, tgt = source_side(p.role), target_side(p.role)
        here = Lit(vm.part_var(p, src))
        role = cbf(p.role, 0, vm)
        there = Lit(vm.part_var(AtomicPart(p.filler), tgt))
        if p.quantifier == "forall":
            out.append(implies(conj(here, role), there))
        else:
            out.append(implies(conj(there, role), here))
    if vm.split_inverses:
        for k in vm.role_keys:
            out.append(implies(cbf(k, 0, vm), cbf(k.inverse(), 0, vm)))
    return out


# ---- CNF ----


@dataclass
class Cnf:
    num_vars: int
    clauses: list[tuple[int, ...]] = field(default_factory=list)

    def stats(self) -> dict[str, float]:
        widths = [len(c) for c in self.clauses]
        return {
            "variables": self.num_vars,
            "clauses": len(self.clauses),
            "avg_clause_width": float(np.mean(widths)) if widths else 0.0,
        }


class _Tseitin:
    """Clausifier; compound subformulas get one definitional variable each, numbered in first-use order."""

    def __init__(self, first_aux: int) -> None:
        self.next_var = first_aux
        self.defs: dict[PropFormula, int] = {}
        self.clauses: list[tuple[int, ...]] = []

    def add(self, lits: Iterable[int]) -> None:
        self.clauses.append(tuple(dict.fromkeys(lits)))

    def literal(self, f: PropFormula) -> int:
        if isinstance(f, Lit):
            return f.var + 1 if f.positive else -(f.var + 1)
        if f in self.defs:
            return self.defs[f]
        kids = [self.literal(g) for g in f.items]
        a = self.next_var
        self.next_var += 1
        self.defs[f] = a
        if isinstance(f, PAnd):
            for k in kids:
                self.add((-a, k))
            self.add([a] + [-k for k in kids])
        else:
            self.add([-a] + kids)
            for k in kids:
                self.add((a, -k))
        return a

    def assert_formula(self, f: PropFormula) -> None:
        if isinstance(f, PTrue):
            return
        if isinstance(f, PFalse):
            self.clauses.append(())
            return
        if isinstance(f, PAnd):
            for g in f.items:
                self.assert_formula(g)
            return
        if isinstance(f, POr):
            self.add(self.literal(g) for g in f.items)
            return
        self.add((self.literal(f),))


def to_cnf(formulas: Iterable[PropFormula], num_vars: int) -> Cnf:
    ts = _Tseitin(num_vars + 1)
    for f in formulas:
        ts.assert_formula(f)
    return Cnf(ts.next_var - 1, ts.clauses)


def build_d0_cnf(onto: Ontology, parts: Sequence[Part], vm: VarMap) -> Cnf:
    cnf = to_cnf(d0_formulas(onto, parts, vm), vm.total)
    logger.info(
        "D0 CNF: %d clauses over %d variables (%d domino, %d auxiliary)",
        len(cnf.clauses), cnf.num_vars, vm.total, cnf.num_vars - vm.total,
    )
    return cnf


# ---- files ----


def write_dimacs(cnf: Cnf, sink: IO[str]) -> None:
    sink.write(f"p cnf {cnf.num_vars} {len(cnf.clauses)}\n")
    for clause in cnf.clauses:
        sink.write(" ".join(str(lit) for lit in clause) + (" 0\n" if clause else "0\n"))


def read_dimacs(source: IO[str]) -> Cnf:
    header: Optional[tuple[int, int]] = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    for n, line in enumerate(source, start=1):
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            fields = line.split()
            if header is not None or len(fields) != 4 or fields[1] != "cnf":
                raise SchemaError(f"line {n}: malformed DIMACS header {line!r}")
            try:
                header = (int(fields[2]), int(fields[3]))
            except ValueError:
                raise SchemaError(f"line {n}: malformed DIMACS header {line!r}") from None
            continue
        if header is None:
            raise SchemaError(f"line {n}: clause before header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise SchemaError(f"line {n}: bad literal {tok!r}") from None
            if abs(lit) > header[0]:
                raise SchemaError(f"line {n}: literal {lit} exceeds {header[0]} variables")
            if lit == 0:
                clauses.append(tuple(current))
                current = []
            else:
                current.append(lit)
    if header is None:
        raise SchemaError("missing DIMACS header")
    if current:
        clauses.append(tuple(current))
    if len(clauses) != header[1]:
        raise SchemaError(f"header announces {header[1]} clauses, found {len(clauses)}")
    return Cnf(header[0], clauses)


def write_varmap(vm: VarMap, sink: IO[str]) -> None:
    sink.write("index\tkind\tname\tside\n")
    for index, kind, name, side in vm.describe():
        sink.write(f"{index}\t{kind}\t{name}\t{side}\n")


def read_varmap_names(source: IO[str]) -> list[str]:
    """Column names as written by write_varmap, for checking assignment headers."""
    lines = [l.rstrip("\n") for l in source if l.strip()]
    if not lines or lines[0].split("\t") != ["index", "kind", "name", "side"]:
        raise SchemaError("varmap file lacks its header")
    names: list[str] = []
    for expected, line in enumerate(lines[1:]):
        fields = line.split("\t")
        if len(fields) != 4 or fields[0] != str(expected):
            raise SchemaError(f"malformed varmap row {line!r}")
        names.append(fields[2] if fields[3] == "-" else f"{fields[2]}@{fields[3]}")
    return names
