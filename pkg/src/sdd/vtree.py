"""
Vtrees: full binary trees over variable indices. Node ids are in-order positions,
so "u is inside v" is a range check and the left subtree of a root always
numbers from 0.
"""
from __future__ import annotations

import logging
from typing import IO, Optional, Sequence

from src.errors import SchemaError

logger = logging.getLogger(__name__)

STRATEGIES = ("balanced", "right-linear")


class VNode:
    __slots__ = ("id", "var", "left", "right", "parent", "lo", "hi", "depth", "scope")

    def __init__(self, var: Optional[int] = None, left: Optional[VNode] = None, right: Optional[VNode] = None) -> None:
        self.var = var
        self.left = left
        self.right = right
        self.parent: Optional[VNode] = None
        self.id = -1
        self.lo = -1
        self.hi = -1
        self.depth = 0
        self.scope: frozenset[int] = frozenset()

    @property
    def is_leaf(self) -> bool:
        return self.var is not None

    def contains(self, other: VNode) -> bool:
        return self.lo <= other.id <= self.hi

    def __repr__(self) -> str:
        return f"VNode({self.id}, var={self.var})" if self.is_leaf else f"VNode({self.id})"


class VTree:
    def __init__(self, root: VNode) -> None:
        self.root = root
        self.nodes: list[VNode] = []
        self.leaves: dict[int, VNode] = {}
        self._number(root, None, 0)
        self.variables = sorted(self.leaves)

    def _number(self, v: VNode, parent: Optional[VNode], depth: int) -> None:
        v.parent = parent
        v.depth = depth
        if v.is_leaf:
            if v.var in self.leaves:
                raise ValueError(f"variable {v.var} appears twice in vtree")
            v.id = v.lo = v.hi = len(self.nodes)
            v.scope = frozenset((v.var,))
            self.nodes.append(v)
            self.leaves[v.var] = v
            return
        assert v.left is not None and v.right is not None
        self._number(v.left, v, depth + 1)
        v.id = len(self.nodes)
        self.nodes.append(v)
        self._number(v.right, v, depth + 1)
        v.lo = v.left.lo
        v.hi = v.right.hi
        v.scope = v.left.scope | v.right.scope

    def depth(self) -> int:
        return max(v.depth for v in self.leaves.values())

    def leaf(self, var: int) -> VNode:
        return self.leaves[var]

    def lca(self, a: VNode, b: VNode) -> VNode:
        while not a.contains(b):
            assert a.parent is not None
            a = a.parent
        return a

    def shape(self) -> tuple:
        """Hashable structure, used to compare vtrees across managers."""

        def walk(v: VNode) -> tuple:
            return (v.var,) if v.is_leaf else (walk(v.left), walk(v.right))

        return walk(self.root)

    def postorder(self) -> list[VNode]:
        out: list[VNode] = []

        def walk(v: VNode) -> None:
            if not v.is_leaf:
                walk(v.left)
                walk(v.right)
            out.append(v)

        walk(self.root)
        return out


def _balanced(vars_: Sequence[int]) -> VNode:
    if len(vars_) == 1:
        return VNode(var=vars_[0])
    mid = (len(vars_) + 1) // 2
    return VNode(left=_balanced(vars_[:mid]), right=_balanced(vars_[mid:]))


def _right_linear(vars_: Sequence[int]) -> VNode:
    node = VNode(var=vars_[-1])
    for v in reversed(vars_[:-1]):
        node = VNode(left=VNode(var=v), right=node)
    return node


def build_vtree(variables: int | Sequence[int], strategy: str = "balanced") -> VTree:
    """Vtree over 0..n-1 (or the given indices, in order)."""
    vars_ = list(range(variables)) if isinstance(variables, int) else list(variables)
    if not vars_:
        raise ValueError("a vtree needs at least one variable")
    if strategy == "balanced":
        return VTree(_balanced(vars_))
    if strategy == "right-linear":
        return VTree(_right_linear(vars_))
    raise ValueError(f"unknown vtree strategy {strategy!r} (expected one of {', '.join(STRATEGIES)})")


def extend_vtree(base: VTree, extra: Sequence[int], strategy: str = "balanced") -> VTree:
    """A fresh vtree whose root has a copy of `base` on the left and `extra` on the right."""

    def copy(v: VNode) -> VNode:
        return VNode(var=v.var) if v.is_leaf else VNode(left=copy(v.left), right=copy(v.right))

    if not extra:
        return VTree(copy(base.root))
    tail = build_vtree(extra, strategy).root
    return VTree(VNode(left=copy(base.root), right=tail))


def write_vtree(vt: VTree, sink: IO[str]) -> None:
    sink.write(f"vtree {len(vt.nodes)}\n")
    for v in vt.postorder():
        if v.is_leaf:
            sink.write(f"L {v.id} {v.var}\n")
        else:
            sink.write(f"I {v.id} {v.left.id} {v.right.id}\n")


def read_vtree(source: IO[str]) -> VTree:
    lines = [l.split() for l in source if l.strip() and not l.startswith("c")]
    if not lines or lines[0][0] != "vtree" or len(lines[0]) != 2:
        raise SchemaError("missing vtree header")
    built: dict[int, VNode] = {}
    last: Optional[VNode] = None
    try:
        for fields in lines[1:]:
            if fields[0] == "L" and len(fields) == 3:
                last = VNode(var=int(fields[2]))
            elif fields[0] == "I" and len(fields) == 4:
                last = VNode(left=built.pop(int(fields[2])), right=built.pop(int(fields[3])))
            else:
                raise SchemaError(f"malformed vtree record {' '.join(fields)!r}")
            built[int(fields[1])] = last
    except (KeyError, ValueError) as e:
        raise SchemaError(f"bad vtree reference: {e}") from None
    if last is None or len(built) != 1:
        raise SchemaError("vtree file does not describe a single tree")
    vt = VTree(last)
    if len(vt.nodes) != int(lines[0][1]):
        raise SchemaError(f"vtree header announces {lines[0][1]} nodes, found {len(vt.nodes)}")
    return vt
