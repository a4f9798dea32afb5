"""
Text node-list format for circuits. One record per line, children before parents,
the root last:

    sdd <node_count>
    F <id> | T <id> | L <id> <var> <1|0> | G <id> <var>
    D <id> <vtree-id> <k> <prime1> <sub1> ... <primek> <subk>
    S <id> <vtree-id> <k> ...         (smoothed, untrimmed decision)
"""
from __future__ import annotations

import logging
from typing import IO, Optional, Union

from src.errors import SchemaError, UnknownVariableError
from src.sdd.circuit import Circuit
from src.sdd.manager import Node, SddManager, reachable
from src.sdd.vtree import VTree

logger = logging.getLogger(__name__)


def write_circuit(c: Circuit, sink: IO[str]) -> None:
    nodes = reachable(c.root)
    ids = {n.id: i for i, n in enumerate(nodes)}
    sink.write(f"sdd {len(nodes)}\n")
    for n in nodes:
        i = ids[n.id]
        if n.kind in ("F", "T"):
            sink.write(f"{n.kind} {i}\n")
        elif n.kind == "L":
            sink.write(f"L {i} {n.var} {1 if n.positive else 0}\n")
        elif n.kind == "G":
            sink.write(f"G {i} {n.var}\n")
        else:
            body = " ".join(f"{ids[p.id]} {ids[s.id]}" for p, s in n.elements)
            sink.write(f"{n.kind} {i} {n.vnode.id} {len(n.elements)} {body}\n")


def read_circuit(source: IO[str], target: Union[VTree, SddManager], node_cap: Optional[int] = None) -> Circuit:
    mgr = target if isinstance(target, SddManager) else SddManager(target, node_cap)
    lines = [l.split() for l in source if l.strip() and not l.startswith("c ")]
    if not lines or lines[0][0] != "sdd" or len(lines[0]) != 2:
        raise SchemaError("missing 'sdd <count>' header")
    built: dict[int, Node] = {}
    last: Optional[Node] = None
    for fields in lines[1:]:
        try:
            kind, nid = fields[0], int(fields[1])
            if kind == "F":
                node = mgr.false
            elif kind == "T":
                node = mgr.true
            elif kind == "L":
                node = mgr.literal(int(fields[2]), fields[3] == "1")
            elif kind == "G":
                node = mgr.gap(int(fields[2]))
            elif kind in ("D", "S"):
                v = mgr.vtree.nodes[int(fields[2])]
                k = int(fields[3])
                refs = [int(x) for x in fields[4:]]
                if len(refs) != 2 * k or v.is_leaf:
                    raise SchemaError(f"decision {nid}: bad element list")
                elems = [(built[refs[2 * e]], built[refs[2 * e + 1]]) for e in range(k)]
                for p, s in elems:
                    if (p.vnode is not None and not v.left.contains(p.vnode)) or (
                        s.vnode is not None and not v.right.contains(s.vnode)
                    ):
                        raise SchemaError(f"decision {nid} does not respect vtree node {v.id}")
                node = mgr.decision(v, elems) if kind == "D" else mgr.smooth_decision(v, elems)
            else:
                raise SchemaError(f"unknown record {fields[0]!r}")
        except KeyError as e:
            raise SchemaError(f"dangling node reference {e}") from None
        except (IndexError, ValueError) as e:
            raise SchemaError(f"malformed record {' '.join(fields)!r}: {e}") from None
        except UnknownVariableError as e:
            raise SchemaError(str(e)) from None
        if nid in built:
            raise SchemaError(f"duplicate node id {nid}")
        built[nid] = node
        last = node
    if last is None:
        raise SchemaError("circuit file has no nodes")
    if len(built) != int(lines[0][1]):
        raise SchemaError(f"header announces {lines[0][1]} nodes, found {len(built)}")
    return Circuit(mgr, last)
