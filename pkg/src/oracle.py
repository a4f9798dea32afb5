"""
Brute-force reference reasoner. Domino sets are explicit boolean masks over all 2^n
assignments; the initial set and its refinement are re-derived here from the
algorithm text, independently of the CNF encoder and the circuit engine.
Only usable for small variable spaces (at most MAX_VARS variables).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import IO, Mapping, Optional, Sequence

import numpy as np

from src.dl import (
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
    extract_parts,
    normalize,
)
from src.errors import OracleSizeError, ZeroProbabilityEvidence
from src.infer import Bernoulli, Indicator, Marginalized, Parameterization

logger = logging.getLogger(__name__)

MAX_VARS = 24


def _check_size(n: int) -> None:
    if n > MAX_VARS:
        raise OracleSizeError(f"{n} variables exceed the oracle cap of {MAX_VARS}")


@dataclass(frozen=True, eq=False)
class ExplicitSet:
    """Sorted codes of the member vectors; bit n-1-v of a code is variable v."""

    n: int
    codes: np.ndarray

    def __len__(self) -> int:
        return len(self.codes)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ExplicitSet) and self.n == other.n and np.array_equal(self.codes, other.codes)

    def __contains__(self, x: Sequence[int]) -> bool:
        code = _encode(x)
        i = np.searchsorted(self.codes, code)
        return bool(i < len(self.codes) and self.codes[i] == code)

    def vectors(self) -> np.ndarray:
        return _bits(self.codes, self.n)

    def write_tsv(self, names: Sequence[str], sink: IO[str]) -> None:
        sink.write("\t".join(names) + "\n")
        for row in self.vectors():
            sink.write("\t".join(str(int(b)) for b in row) + "\n")

    @classmethod
    def from_mask(cls, n: int, mask: np.ndarray) -> ExplicitSet:
        return cls(n, np.flatnonzero(mask).astype(np.int64))

    @classmethod
    def from_vectors(cls, n: int, xs: np.ndarray) -> ExplicitSet:
        xs = np.asarray(xs).reshape(-1, n)
        return cls(n, np.unique(np.array([_encode(r) for r in xs], dtype=np.int64)))


def _encode(x: Sequence[int]) -> int:
    code = 0
    for b in x:
        code = (code << 1) | int(b)
    return code


def _bits(codes: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8)


class _Space:
    """Every assignment of the domino space, one column view per variable."""

    def __init__(self, onto: Ontology, split_inverses: bool) -> None:
        self.onto = normalize(onto)
        self.parts: list[Part] = extract_parts(self.onto)
        if split_inverses:
            self.keys = [RoleExpr(r, inv) for r in onto.roles for inv in (False, True)]
        else:
            self.keys = [RoleExpr(r) for r in onto.roles]
        self.split = split_inverses
        k = len(self.parts)
        self.n = 2 * k + len(self.keys)
        _check_size(self.n)
        self.codes = np.arange(1 << self.n, dtype=np.int64)
        self._cols: dict[int, np.ndarray] = {}

    def col(self, v: int) -> np.ndarray:
        if v not in self._cols:
            self._cols[v] = ((self.codes >> (self.n - 1 - v)) & 1).astype(bool)
        return self._cols[v]

    def pos(self, part: Part, side: int) -> int:
        i = self.parts.index(part)
        return i if side == 1 else len(self.parts) + len(self.keys) + i

    def role_pos(self, role: RoleExpr) -> int:
        key = role if self.split else RoleExpr(role.name)
        return len(self.parts) + self.keys.index(key)

    def block(self, side: int) -> list[int]:
        return [self.pos(p, side) for p in self.parts]

    def holds(self, e: ConceptExpr, side: int) -> np.ndarray:
        if isinstance(e, Top):
            return np.ones(len(self.codes), dtype=bool)
        if isinstance(e, Bottom):
            return np.zeros(len(self.codes), dtype=bool)
        if isinstance(e, Atomic):
            return self.col(self.pos(AtomicPart(e.name), side))
        if isinstance(e, (Exists, Forall)):
            q = "exists" if isinstance(e, Exists) else "forall"
            return self.col(self.pos(RestrictionPart(q, e.role, e.filler.name), side))
        if isinstance(e, Not):
            return ~self.holds(e.operand, side)
        if isinstance(e, And):
            return self.holds(e.left, side) & self.holds(e.right, side)
        if isinstance(e, Or):
            return self.holds(e.left, side) | self.holds(e.right, side)
        raise TypeError(f"cannot evaluate {e!r}")

    def key_of(self, variables: Sequence[int]) -> np.ndarray:
        key = np.zeros(len(self.codes), dtype=np.int64)
        for v in variables:
            key = (key << 1) | self.col(v)
        return key


def _d0_mask(sp: _Space) -> np.ndarray:
    ok = np.ones(len(sp.codes), dtype=bool)
    for ax in sp.onto.tbox:
        for j in (1, 2):
            ok &= ~sp.holds(ax.lhs, j) | sp.holds(ax.rhs, j)
    for p in sp.parts:
        if not isinstance(p, RestrictionPart):
            continue
        # the individual the restriction speaks about sits on side 1 unless the role is inverted
        here_side = 2 if p.role.inverted else 1
        there_side = 3 - here_side
        here = sp.col(sp.pos(p, here_side))
        linked = sp.col(sp.role_pos(p.role))
        there = sp.col(sp.pos(AtomicPart(p.filler), there_side))
        if p.quantifier == "forall":
            ok &= ~(here & linked) | there
        else:
            ok &= ~(there & linked) | here
    if sp.split:
        for k in sp.keys:
            ok &= ~sp.col(sp.role_pos(k)) | sp.col(sp.role_pos(k.inverse()))
    return ok


def _refine_mask(sp: _Space, d0: np.ndarray) -> tuple[np.ndarray, int]:
    """
    Drops dominoes with an unrealizable side until nothing changes. A type (one side's
    part assignment) is realizable when each restriction it mentions has the truth value
    its role successors among the surviving dominoes give it: ∃R.C holds iff some
    successor is in C, ∀R.C holds iff none is outside C.
    """
    restrictions = [p for p in sp.parts if isinstance(p, RestrictionPart)]
    keys = {j: sp.key_of(sp.block(j)) for j in (1, 2)}
    k = len(sp.parts)
    types = np.arange(1 << k, dtype=np.int64)
    prev = d0
    rounds = 0
    while True:
        rounds += 1
        realizable = np.ones(len(types), dtype=bool)
        for p in restrictions:
            here_side = 2 if p.role.inverted else 1
            there_side = 3 - here_side
            edges = prev & sp.col(sp.role_pos(p.role))
            in_filler = sp.col(sp.pos(AtomicPart(p.filler), there_side))
            some_in = np.zeros(len(types), dtype=bool)
            some_in[keys[here_side][edges & in_filler]] = True
            some_out = np.zeros(len(types), dtype=bool)
            some_out[keys[here_side][edges & ~in_filler]] = True
            actual = some_in if p.quantifier == "exists" else ~some_out
            claimed = ((types >> (k - 1 - sp.parts.index(p))) & 1).astype(bool)
            realizable &= claimed == actual
        cur = prev & realizable[keys[1]] & realizable[keys[2]]
        if np.array_equal(cur, prev):
            return cur, rounds
        prev = cur


def oracle_d0(onto: Ontology, split_inverses: bool = False) -> ExplicitSet:
    sp = _Space(onto, split_inverses)
    return ExplicitSet.from_mask(sp.n, _d0_mask(sp))


def oracle_refine(d0: ExplicitSet, onto: Ontology, split_inverses: bool = False) -> ExplicitSet:
    sp = _Space(onto, split_inverses)
    if d0.n != sp.n:
        raise ValueError(f"set has {d0.n} variables, ontology space has {sp.n}")
    mask = np.zeros(len(sp.codes), dtype=bool)
    mask[d0.codes] = True
    out, rounds = _refine_mask(sp, mask)
    logger.debug("Oracle refinement reached its fixpoint after %d rounds", rounds)
    return ExplicitSet.from_mask(sp.n, out)


def oracle_domino_set(onto: Ontology, split_inverses: bool = False) -> ExplicitSet:
    return oracle_refine(oracle_d0(onto, split_inverses), onto, split_inverses)


def oracle_cnf_models(num_vars: int, clauses: Sequence[Sequence[int]], keep: Optional[int] = None) -> ExplicitSet:
    """Models of a clause list, projected onto the first `keep` variables."""
    _check_size(num_vars)
    codes = np.arange(1 << num_vars, dtype=np.int64)
    ok = np.ones(len(codes), dtype=bool)
    for clause in clauses:
        sat = np.zeros(len(codes), dtype=bool)
        for lit in clause:
            bit = ((codes >> (num_vars - abs(lit))) & 1).astype(bool)
            sat |= bit if lit > 0 else ~bit
        ok &= sat
    keep = num_vars if keep is None else keep
    return ExplicitSet(keep, np.unique(codes[ok] >> (num_vars - keep)))


# ---- probabilistic references ----


def _input_logs(theta: Parameterization, n: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """log P(x_v = 1), log P(x_v = 0) per variable, and the marginalized variables (factor 1 both ways)."""
    pos = np.zeros(n)
    neg = np.zeros(n)
    free: list[int] = []
    for v, d in enumerate(theta.input_dist):
        if isinstance(d, Indicator):
            pos[v], neg[v] = (0.0, -math.inf) if d.value else (-math.inf, 0.0)
        elif isinstance(d, Bernoulli):
            pos[v] = math.log(d.p) if d.p > 0 else -math.inf
            neg[v] = math.log(1 - d.p) if d.p < 1 else -math.inf
        elif isinstance(d, Marginalized):
            free.append(v)
    return pos, neg, free


def _model_logs(s: ExplicitSet, pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    bits = s.vectors().astype(bool)
    with np.errstate(invalid="ignore"):
        return np.where(bits, pos[None, :], neg[None, :]).sum(axis=1)


def oracle_mass(s: ExplicitSet, theta: Parameterization) -> float:
    """Σ over members of Π θ_v(x_v), marginalized inputs contributing 1."""
    pos, neg, _ = _input_logs(theta, s.n)
    logs = _model_logs(s, pos, neg)
    return float(np.exp(logs).sum()) if len(logs) else 0.0


def oracle_wmc(s: ExplicitSet, theta: Parameterization) -> float:
    """Marginalized variables projected away, then the mass of the distinct projections."""
    pos, neg, free = _input_logs(theta, s.n)
    kept = [v for v in range(s.n) if v not in free]
    if not len(s):
        return 0.0
    proj = np.unique(s.vectors()[:, kept], axis=0)
    total = 0.0
    for row in proj:
        total += math.exp(sum(pos[v] if b else neg[v] for v, b in zip(kept, row)))
    return total


def oracle_distribution(s: ExplicitSet, theta: Parameterization) -> np.ndarray:
    """Probability of each member (in code order) under θ restricted to the set."""
    pos, neg, _ = _input_logs(theta, s.n)
    w = np.exp(_model_logs(s, pos, neg))
    total = w.sum()
    if total <= 0:
        raise ZeroProbabilityEvidence("no member has positive mass")
    return w / total


def oracle_marginal(s: ExplicitSet, theta: Parameterization, var: int) -> float:
    """P(x_var = 1) under θ restricted to the set."""
    p = oracle_distribution(s, theta)
    return float(p[s.vectors()[:, var] == 1].sum())


def oracle_map(s: ExplicitSet, theta: Parameterization, evidence: Optional[Mapping[int, int]] = None) -> np.ndarray:
    """Highest-weight member consistent with evidence; ties go to the smallest code."""
    pos, neg, _ = _input_logs(theta, s.n)
    xs = s.vectors()
    logs = _model_logs(s, pos, neg)
    if evidence:
        for v, b in evidence.items():
            logs = np.where(xs[:, v] == int(b), logs, -math.inf)
    if not len(logs) or not np.isfinite(logs.max()):
        raise ZeroProbabilityEvidence("no member is consistent with the evidence")
    best = logs.max()
    for i, value in enumerate(logs):
        if math.isclose(value, best, rel_tol=1e-12, abs_tol=1e-12):
            return xs[i]
    raise AssertionError("unreachable")
