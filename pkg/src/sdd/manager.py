"""
SDD node manager: unique table, apply cache and the canonical transformations
(apply, negate, condition, exists, rename), plus smoothing.

Canonical nodes are F, T, literals (L) and compressed, trimmed decisions (D).
Smoothing produces a second family: gap units G (v or not v) and untrimmed
decisions S normalized exactly at their vtree node. Canonical operations only
accept canonical nodes; to_canonical maps a smoothed node back.
"""
from __future__ import annotations

import logging
from typing import Iterable, Mapping, Optional

from src import config
from src.errors import NodeCapExceeded, UnknownVariableError
from src.sdd.vtree import VNode, VTree

logger = logging.getLogger(__name__)

AND = "and"
OR = "or"

Element = tuple["Node", "Node"]


class Node:
    __slots__ = ("id", "kind", "vnode", "var", "positive", "elements", "_neg")

    def __init__(
        self,
        id: int,
        kind: str,
        vnode: Optional[VNode] = None,
        var: int = -1,
        positive: bool = True,
        elements: tuple[Element, ...] = (),
    ) -> None:
        self.id = id
        self.kind = kind
        self.vnode = vnode
        self.var = var
        self.positive = positive
        self.elements = elements
        self._neg: Optional[Node] = None

    @property
    def is_false(self) -> bool:
        return self.kind == "F"

    @property
    def is_true(self) -> bool:
        return self.kind == "T"

    @property
    def is_decision(self) -> bool:
        return self.kind in ("D", "S")

    @property
    def is_canonical(self) -> bool:
        return self.kind in ("F", "T", "L", "D")

    def __repr__(self) -> str:
        if self.kind == "L":
            return f"Node({self.id}, {'' if self.positive else '-'}x{self.var})"
        if self.kind == "G":
            return f"Node({self.id}, gap x{self.var})"
        if self.is_decision:
            return f"Node({self.id}, {self.kind}@{self.vnode.id}, {len(self.elements)} elements)"
        return f"Node({self.id}, {self.kind})"


class SddManager:
    """One compilation session. Not thread-safe; finished nodes are read-only."""

    def __init__(self, vtree: VTree, node_cap: Optional[int] = None) -> None:
        self.vtree = vtree
        self.node_cap = node_cap if node_cap is not None else config.DEFAULTS["node_cap"]
        self._nodes: list[Node] = []
        self._unique: dict[tuple, Node] = {}
        self._apply_cache: dict[tuple[str, int, int], Node] = {}
        self.false = self._make(("F",), "F")
        self.true = self._make(("T",), "T")
        self.false._neg = self.true
        self.true._neg = self.false

    # ---- construction ----

    def _make(self, key: tuple, kind: str, **fields) -> Node:
        node = self._unique.get(key)
        if node is not None:
            return node
        if len(self._nodes) >= self.node_cap:
            raise NodeCapExceeded(self.node_cap)
        node = Node(len(self._nodes), kind, **fields)
        self._nodes.append(node)
        self._unique[key] = node
        return node

    @property
    def size(self) -> int:
        """Nodes ever created in this session."""
        return len(self._nodes)

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def _leaf(self, var: int) -> VNode:
        try:
            return self.vtree.leaf(var)
        except KeyError:
            raise UnknownVariableError(f"variable {var} is not in the vtree") from None

    def literal(self, var: int, positive: bool = True) -> Node:
        leaf = self._leaf(var)
        pos = self._make(("L", var, True), "L", vnode=leaf, var=var, positive=True)
        if pos._neg is None:
            neg = self._make(("L", var, False), "L", vnode=leaf, var=var, positive=False)
            pos._neg = neg
            neg._neg = pos
        return pos if positive else pos._neg

    def decision(self, v: VNode, elements: Iterable[Element]) -> Node:
        """Canonical node for a partition at v: drops false primes, compresses equal subs, trims."""
        by_sub: dict[int, list[Node]] = {}
        for p, s in elements:
            if p.is_false:
                continue
            if s.id in by_sub:
                by_sub[s.id][1] = self.apply(OR, by_sub[s.id][1], p)
            else:
                by_sub[s.id] = [s, p]
        if not by_sub:
            return self.false
        elems = sorted(((p, s) for s, p in by_sub.values()), key=lambda e: e[0].id)
        if len(elems) == 1:
            return elems[0][1]
        if len(elems) == 2:
            (p1, s1), (p2, s2) = elems
            if s1.is_true and s2.is_false:
                return p1
            if s1.is_false and s2.is_true:
                return p2
        key = ("D", v.id, tuple((p.id, s.id) for p, s in elems))
        return self._make(key, "D", vnode=v, elements=tuple(elems))

    # ---- canonical transformations ----

    def negate(self, a: Node) -> Node:
        if a._neg is not None:
            return a._neg
        if a.kind == "L":
            out = self.literal(a.var, not a.positive)
        elif a.kind == "D":
            out = self.decision(a.vnode, [(p, self.negate(s)) for p, s in a.elements])
        else:
            raise ValueError(f"negate needs a canonical node, got {a!r}")
        a._neg = out
        out._neg = a
        return out

    def _elements_at(self, n: Node, v: VNode) -> tuple[Element, ...]:
        if n.vnode is v:
            return n.elements
        if v.left.contains(n.vnode):
            return ((n, self.true), (self.negate(n), self.false))
        return ((self.true, n),)

    def apply(self, op: str, a: Node, b: Node) -> Node:
        if op == AND:
            if a.is_false or b.is_false:
                return self.false
            if a.is_true:
                return b
            if b.is_true or a is b:
                return a
            if a._neg is b:
                return self.false
        elif op == OR:
            if a.is_true or b.is_true:
                return self.true
            if a.is_false:
                return b
            if b.is_false or a is b:
                return a
            if a._neg is b:
                return self.true
        else:
            raise ValueError(f"unknown operation {op!r}")
        if not (a.is_canonical and b.is_canonical):
            raise ValueError("apply needs canonical nodes; smoothed circuits are query-only")
        if a.id > b.id:
            a, b = b, a
        key = (op, a.id, b.id)
        hit = self._apply_cache.get(key)
        if hit is not None:
            return hit
        v = self.vtree.lca(a.vnode, b.vnode)
        ea = self._elements_at(a, v)
        eb = self._elements_at(b, v)
        out_elems: list[Element] = []
        for p1, s1 in ea:
            for p2, s2 in eb:
                p = self.apply(AND, p1, p2)
                if p.is_false:
                    continue
                out_elems.append((p, self.apply(op, s1, s2)))
        out = self.decision(v, out_elems)
        self._apply_cache[key] = out
        return out

    def conjoin(self, *nodes: Node) -> Node:
        out = self.true
        for n in nodes:
            out = self.apply(AND, out, n)
        return out

    def disjoin(self, *nodes: Node) -> Node:
        out = self.false
        for n in nodes:
            out = self.apply(OR, out, n)
        return out

    def _check_var(self, var: int) -> None:
        if var not in self.vtree.leaves:
            raise UnknownVariableError(f"variable {var} is not in the vtree")

    def condition(self, a: Node, var: int, value: bool) -> Node:
        self._check_var(var)
        memo: dict[int, Node] = {}

        def walk(n: Node) -> Node:
            if n.vnode is None or var not in n.vnode.scope:
                return n
            if n.id in memo:
                return memo[n.id]
            if n.kind == "L":
                out = self.true if n.positive == bool(value) else self.false
            else:
                out = self.disjoin(*(self.apply(AND, walk(p), walk(s)) for p, s in n.elements))
            memo[n.id] = out
            return out

        return walk(a)

    def exists(self, a: Node, variables: Iterable[int]) -> Node:
        qs = frozenset(variables)
        for var in qs:
            self._check_var(var)
        memo: dict[int, Node] = {}

        def walk(n: Node) -> Node:
            if n.vnode is None or qs.isdisjoint(n.vnode.scope):
                return n
            if n.id in memo:
                return memo[n.id]
            if n.kind == "L":
                out = self.true
            else:
                out = self.disjoin(*(self.apply(AND, walk(p), walk(s)) for p, s in n.elements))
            memo[n.id] = out
            return out

        return walk(a)

    def rename(self, a: Node, mapping: Mapping[int, int]) -> Node:
        """Substitute variables by an injective map; targets must be vtree variables."""
        for var in mapping.values():
            self._check_var(var)
        touched = frozenset(mapping)
        memo: dict[int, Node] = {}

        def walk(n: Node) -> Node:
            if n.vnode is None or touched.isdisjoint(n.vnode.scope):
                return n
            if n.id in memo:
                return memo[n.id]
            if n.kind == "L":
                out = self.literal(mapping.get(n.var, n.var), n.positive)
            else:
                out = self.disjoin(*(self.apply(AND, walk(p), walk(s)) for p, s in n.elements))
            memo[n.id] = out
            return out

        return walk(a)

    # ---- smoothing ----

    def gap(self, var: int) -> Node:
        return self._make(("G", var), "G", vnode=self._leaf(var), var=var)

    def smooth_decision(self, v: VNode, elements: Iterable[Element]) -> Node:
        elems = tuple(elements)
        key = ("S", v.id, tuple((p.id, s.id) for p, s in elems))
        return self._make(key, "S", vnode=v, elements=elems)

    def smooth(self, a: Node, v: Optional[VNode] = None) -> Node:
        """Equivalent node mentioning every variable of v (root by default)."""
        memo: dict[tuple[int, int], Node] = {}

        def walk(n: Node, v: VNode) -> Node:
            if n.is_false:
                return n
            key = (n.id, v.id)
            if key in memo:
                return memo[key]
            if v.is_leaf:
                out = self.gap(v.var) if n.is_true else n
            elif n.is_true:
                out = self.smooth_decision(v, [(walk(n, v.left), walk(n, v.right))])
            elif n.vnode is v:
                out = self.smooth_decision(v, [(walk(p, v.left), walk(s, v.right)) for p, s in n.elements])
            elif v.left.contains(n.vnode):
                out = self.smooth_decision(
                    v,
                    [(walk(n, v.left), walk(self.true, v.right)), (walk(self.negate(n), v.left), self.false)],
                )
            else:
                out = self.smooth_decision(v, [(walk(self.true, v.left), walk(n, v.right))])
            memo[key] = out
            return out

        if not a.is_canonical:
            a = self.to_canonical(a)
        return walk(a, v or self.vtree.root)

    def to_canonical(self, a: Node) -> Node:
        memo: dict[int, Node] = {}

        def walk(n: Node) -> Node:
            if n.is_canonical:
                return n
            if n.id in memo:
                return memo[n.id]
            if n.kind == "G":
                out = self.true
            else:
                out = self.disjoin(*(self.apply(AND, walk(p), walk(s)) for p, s in n.elements))
            memo[n.id] = out
            return out

        return walk(a)

    # ---- counting and copying ----

    def model_count(self, a: Node, v: Optional[VNode] = None) -> int:
        """Models over the variables of v (root by default)."""
        v = v or self.vtree.root
        memo: dict[int, int] = {}

        def at(n: Node, w: VNode) -> int:
            if n.is_false:
                return 0
            if n.is_true:
                return 2 ** len(w.scope)
            return own(n) * 2 ** (len(w.scope) - len(n.vnode.scope))

        def own(n: Node) -> int:
            if n.id in memo:
                return memo[n.id]
            if n.kind == "L":
                out = 1
            elif n.kind == "G":
                out = 2
            else:
                w = n.vnode
                out = sum(at(p, w.left) * at(s, w.right) for p, s in n.elements)
            memo[n.id] = out
            return out

        if a.vnode is not None and not v.contains(a.vnode):
            raise UnknownVariableError("node mentions variables outside the counting scope")
        return at(a, v)

    def translate(self, a: Node, target: SddManager, mapping: Mapping[int, int]) -> Node:
        """Rebuild a canonical node in another manager, renaming variables through `mapping`."""
        memo: dict[int, Node] = {}

        def walk(n: Node) -> Node:
            if n.is_false:
                return target.false
            if n.is_true:
                return target.true
            if n.id in memo:
                return memo[n.id]
            if n.kind == "L":
                out = target.literal(mapping[n.var], n.positive)
            else:
                out = target.disjoin(*(target.apply(AND, walk(p), walk(s)) for p, s in n.elements))
            memo[n.id] = out
            return out

        if not a.is_canonical:
            a = self.to_canonical(a)
        return walk(a)

    def transfer(self, a: Node, target: SddManager) -> Node:
        """Copy a node into a manager whose vtree has the same shape over the node's vtree region."""
        memo: dict[int, Node] = {}

        def walk(n: Node) -> Node:
            if n.is_false:
                return target.false
            if n.is_true:
                return target.true
            if n.id in memo:
                return memo[n.id]
            if n.kind == "L":
                out = target.literal(n.var, n.positive)
            elif n.kind == "G":
                out = target.gap(n.var)
            else:
                v = target.vtree.nodes[n.vnode.id]
                elems = [(walk(p), walk(s)) for p, s in n.elements]
                out = target.decision(v, elems) if n.kind == "D" else target.smooth_decision(v, elems)
            memo[n.id] = out
            return out

        return walk(a)


def reachable(root: Node) -> list[Node]:
    """Nodes under root, children before parents."""
    seen: dict[int, Node] = {}
    stack = [root]
    while stack:
        n = stack.pop()
        if n.id in seen:
            continue
        seen[n.id] = n
        for p, s in n.elements:
            stack.append(p)
            stack.append(s)
    return [seen[i] for i in sorted(seen)]
