"""
Circuit: a root node in a manager, optionally bound to a domino VarMap.
Public transformations (compile, apply, negate, condition, exists, smooth),
property checks, counting/enumeration, and the flattened evaluation plan used
by the batched evaluators.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from src.errors import EnumerationLimitExceeded, UnknownVariableError, VtreeMismatchError
from src.sdd.manager import AND, OR, Node, SddManager, reachable
from src.sdd.vtree import VTree

if TYPE_CHECKING:
    from src.cnf import Cnf, VarMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Circuit:
    manager: SddManager
    root: Node
    varmap: Optional["VarMap"] = None

    @property
    def vtree(self) -> VTree:
        return self.manager.vtree

    @property
    def num_vars(self) -> int:
        return len(self.vtree.variables)

    @property
    def is_smooth(self) -> bool:
        r = self.root
        return not r.is_canonical or r.is_false or (r.kind == "L" and self.vtree.root.is_leaf)

    @cached_property
    def node_count(self) -> int:
        return len(reachable(self.root))

    def with_root(self, root: Node) -> Circuit:
        return Circuit(self.manager, root, self.varmap)

    def canonical(self) -> Circuit:
        if self.root.is_canonical:
            return self
        return self.with_root(self.manager.to_canonical(self.root))

    def smoothed(self) -> Circuit:
        return self if self.is_smooth else smooth(self)

    @cached_property
    def plan(self) -> EvalPlan:
        return EvalPlan.build(self)

    def __repr__(self) -> str:
        return f"Circuit(root={self.root!r}, vars={self.num_vars})"


# ---- transformations ----


def _same(a: Circuit, b: Circuit) -> None:
    if a.manager is not b.manager:
        raise VtreeMismatchError("circuits belong to different managers/vtrees")


def compile_cnf(cnf: "Cnf", vt: VTree, node_cap: Optional[int] = None, varmap: Optional["VarMap"] = None) -> Circuit:
    """Bottom-up compilation: one SDD per clause, conjoined in vtree-scope order."""
    missing = [v for v in range(cnf.num_vars) if v not in vt.leaves]
    if missing:
        raise VtreeMismatchError(f"vtree lacks {len(missing)} CNF variables (first: {missing[0]})")
    mgr = SddManager(vt, node_cap)
    start = time.perf_counter()

    def scope_key(clause: tuple[int, ...]) -> tuple[int, int]:
        if not clause:
            return (-1, -1)
        v = vt.leaf(abs(clause[0]) - 1)
        for lit in clause[1:]:
            v = vt.lca(v, vt.leaf(abs(lit) - 1))
        return (v.hi - v.lo, v.id)

    root = mgr.true
    for n, clause in enumerate(sorted(cnf.clauses, key=scope_key), start=1):
        c = mgr.disjoin(*(mgr.literal(abs(l) - 1, l > 0) for l in clause))
        root = mgr.apply(AND, root, c)
        if root.is_false:
            logger.debug("CNF became unsatisfiable at clause %d", n)
            break
        if n % 500 == 0:
            logger.debug("Compiled %d/%d clauses, %d nodes so far", n, len(cnf.clauses), mgr.size)
    logger.info("Compiled %d clauses in %.2fs (%d nodes created)", len(cnf.clauses), time.perf_counter() - start, mgr.size)
    return Circuit(mgr, root, varmap)


def apply(op: str, a: Circuit, b: Circuit) -> Circuit:
    _same(a, b)
    a, b = a.canonical(), b.canonical()
    return a.with_root(a.manager.apply(op, a.root, b.root))


def conjoin(a: Circuit, b: Circuit) -> Circuit:
    return apply(AND, a, b)


def disjoin(a: Circuit, b: Circuit) -> Circuit:
    return apply(OR, a, b)


def negate(a: Circuit) -> Circuit:
    a = a.canonical()
    return a.with_root(a.manager.negate(a.root))


def condition(a: Circuit, var: int, value: bool) -> Circuit:
    a = a.canonical()
    return a.with_root(a.manager.condition(a.root, var, value))


def exists(a: Circuit, variables: Iterable[int]) -> Circuit:
    a = a.canonical()
    return a.with_root(a.manager.exists(a.root, variables))


def smooth(a: Circuit) -> Circuit:
    return a.with_root(a.manager.smooth(a.root))


def literal_circuit(like: Circuit, var: int, positive: bool = True) -> Circuit:
    return like.with_root(like.manager.literal(var, positive))


# ---- properties ----


def _var_sets(root: Node) -> dict[int, frozenset[int]]:
    out: dict[int, frozenset[int]] = {}
    for n in reachable(root):
        if n.kind in ("L", "G"):
            out[n.id] = frozenset((n.var,))
        elif n.is_decision:
            acc: frozenset[int] = frozenset()
            for p, s in n.elements:
                acc = acc | out[p.id] | out[s.id]
            out[n.id] = acc
        else:
            out[n.id] = frozenset()
    return out


def check_properties(a: Circuit) -> dict[str, bool]:
    """Structural check of smoothness, decomposability and determinism for every decision unit."""
    mgr = a.manager
    var_sets = _var_sets(a.root)
    smooth_ok = decomposable = deterministic = True
    canon: dict[int, Node] = {}
    for n in reachable(a.root):
        if not n.is_decision:
            continue
        v = n.vnode
        live_scopes = set()
        primes = []
        for p, s in n.elements:
            if (p.vnode is not None and not v.left.contains(p.vnode)) or (
                s.vnode is not None and not v.right.contains(s.vnode)
            ):
                decomposable = False
            if var_sets[p.id] & var_sets[s.id]:
                decomposable = False
            if not s.is_false:
                live_scopes.add(var_sets[p.id] | var_sets[s.id])
            if p.id not in canon:
                canon[p.id] = p if p.is_canonical else mgr.to_canonical(p)
            primes.append(canon[p.id])
        if len(live_scopes) > 1:
            smooth_ok = False
        for x, y in itertools.combinations(primes, 2):
            if not mgr.apply(AND, x, y).is_false:
                deterministic = False
    return {"smooth": smooth_ok, "decomposable": decomposable, "deterministic": deterministic}


# ---- counting and enumeration ----


def model_count(a: Circuit) -> int:
    """Number of models over all vtree variables."""
    return a.manager.model_count(a.root)


def enumerate_models(a: Circuit, limit: int = 1 << 20) -> list[np.ndarray]:
    """Models in lexicographic order of the bit vector (variable 0 most significant)."""
    a = a.canonical()
    mgr = a.manager
    variables = a.vtree.variables
    if variables != list(range(len(variables))):
        raise UnknownVariableError("enumeration needs a vtree over 0..n-1")
    n = len(variables)
    out: list[np.ndarray] = []

    def emit(bits: list[int]) -> None:
        if len(out) >= limit:
            raise EnumerationLimitExceeded(limit, out)
        out.append(np.array(bits, dtype=np.uint8))

    def rec(node: Node, i: int, prefix: list[int]) -> None:
        if node.is_false:
            return
        if node.is_true:
            for tail in itertools.product((0, 1), repeat=n - i):
                emit(prefix + list(tail))
            return
        for value in (0, 1):
            rec(mgr.condition(node, i, bool(value)), i + 1, prefix + [value])

    rec(a.root, 0, [])
    return out


# ---- evaluation plan ----


@dataclass
class Layer:
    """Decisions of one height; their elements are contiguous in the global element order."""

    owners: np.ndarray  # node rows of the decisions
    starts: np.ndarray  # first element (layer-local) of each decision
    primes: np.ndarray  # node rows
    subs: np.ndarray  # node rows
    elem_offset: int  # global index of the layer's first element


@dataclass
class EvalPlan:
    n_vars: int
    n_nodes: int
    root: int
    node_ids: np.ndarray
    lit_rows: np.ndarray
    lit_vars: np.ndarray
    lit_pos: np.ndarray
    gap_rows: np.ndarray
    gap_vars: np.ndarray
    true_rows: np.ndarray
    false_rows: np.ndarray
    layers: list[Layer] = field(default_factory=list)
    n_elements: int = 0
    groups: list[tuple[int, int]] = field(default_factory=list)  # element slice per decision
    live: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))  # element sub is not F
    group_owners: list[int] = field(default_factory=list)  # node row per entry of groups
    elem_primes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    elem_subs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def build(cls, c: Circuit) -> EvalPlan:
        nodes = reachable(c.root)
        row = {n.id: i for i, n in enumerate(nodes)}
        height: dict[int, int] = {}
        for n in nodes:
            height[n.id] = 1 + max((max(height[p.id], height[s.id]) for p, s in n.elements), default=-1)
        lits = [n for n in nodes if n.kind == "L"]
        gaps = [n for n in nodes if n.kind == "G"]
        plan = cls(
            n_vars=max(c.vtree.variables) + 1,
            n_nodes=len(nodes),
            root=row[c.root.id],
            node_ids=np.array([n.id for n in nodes], dtype=np.int64),
            lit_rows=np.array([row[n.id] for n in lits], dtype=np.int64),
            lit_vars=np.array([n.var for n in lits], dtype=np.int64),
            lit_pos=np.array([n.positive for n in lits], dtype=bool),
            gap_rows=np.array([row[n.id] for n in gaps], dtype=np.int64),
            gap_vars=np.array([n.var for n in gaps], dtype=np.int64),
            true_rows=np.array([row[n.id] for n in nodes if n.is_true], dtype=np.int64),
            false_rows=np.array([row[n.id] for n in nodes if n.is_false], dtype=np.int64),
        )
        by_height: dict[int, list[Node]] = {}
        for n in nodes:
            if n.is_decision:
                by_height.setdefault(height[n.id], []).append(n)
        live: list[bool] = []
        offset = 0
        for h in sorted(by_height):
            owners, starts, primes, subs = [], [], [], []
            for n in by_height[h]:
                owners.append(row[n.id])
                starts.append(len(primes))
                plan.groups.append((offset + len(primes), offset + len(primes) + len(n.elements)))
                plan.group_owners.append(row[n.id])
                for p, s in n.elements:
                    primes.append(row[p.id])
                    subs.append(row[s.id])
                    live.append(not s.is_false)
            plan.layers.append(
                Layer(
                    owners=np.array(owners, dtype=np.int64),
                    starts=np.array(starts, dtype=np.int64),
                    primes=np.array(primes, dtype=np.int64),
                    subs=np.array(subs, dtype=np.int64),
                    elem_offset=offset,
                )
            )
            offset += len(primes)
        plan.n_elements = offset
        plan.live = np.array(live, dtype=bool)
        if plan.layers:
            plan.elem_primes = np.concatenate([l.primes for l in plan.layers])
            plan.elem_subs = np.concatenate([l.subs for l in plan.layers])
        return plan

    def element_owner_rows(self) -> np.ndarray:
        """Node row of the decision owning each global element."""
        out = np.empty(self.n_elements, dtype=np.int64)
        for layer in self.layers:
            counts = np.diff(np.append(layer.starts, len(layer.primes)))
            out[layer.elem_offset : layer.elem_offset + len(layer.primes)] = np.repeat(layer.owners, counts)
        return out
