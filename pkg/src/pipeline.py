"""
Ontology compilation: normalize, extract parts, encode the initial domino set,
compile it, then refine to the fixpoint and project the label circuit.
Compiled bundles are directories holding the ontology, varmap, vtrees, circuits and meta.json.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from src import __version__, config
from src.cnf import (
    VarMap,
    build_d0_cnf,
    build_varmap,
    read_varmap_names,
    source_side,
    target_side,
    write_varmap,
)
from src.dl import (
    AtomicPart,
    ConceptAssertion,
    KnowledgeGraphInput,
    Ontology,
    Part,
    RestrictionPart,
    RoleAssertion,
    RoleExpr,
    extract_parts,
    normalize,
    parse_ontology,
    serialize_ontology,
)
from src.errors import SchemaError
from src.sdd import (
    AND,
    OR,
    Circuit,
    SddManager,
    build_vtree,
    compile_cnf,
    extend_vtree,
    read_circuit,
    read_vtree,
    write_circuit,
    write_vtree,
)

logger = logging.getLogger(__name__)

REFINEMENT_READING = (
    "restriction constraints read on the role's source side; "
    "an absent universal needs a witness outside its filler; "
    "role variables and the target part block are quantified in every refinement step"
)


@dataclass(frozen=True, eq=False)
class CompiledOntology:
    ontology: Ontology
    normalized: Ontology
    parts: tuple[Part, ...]
    varmap: VarMap
    circuit: Circuit
    label_circuit: Circuit
    label_layout: tuple[int, ...]
    refinement_rounds: int
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def satisfiable(self) -> bool:
        return not self.circuit.root.is_false

    @cached_property
    def smoothed(self) -> Circuit:
        """C_O with gap nodes filled in, as the probabilistic queries need it."""
        return self.circuit.smoothed()

    @property
    def concepts(self) -> tuple[str, ...]:
        """Atomic concepts of the label space (auxiliary names excluded)."""
        return self.ontology.concepts

    @property
    def label_width(self) -> int:
        return len(self.label_layout)

    def label_blocks(self) -> tuple[slice, slice, slice]:
        """Subject, role and object slices of a label vector."""
        nc = len(self.concepts)
        nr = len(self.varmap.role_keys)
        return slice(0, nc), slice(nc, nc + nr), slice(nc + nr, 2 * nc + nr)

    def label_names(self) -> list[str]:
        return (
            [f"{c}@1" for c in self.concepts]
            + [str(r) for r in self.varmap.role_keys]
            + [f"{c}@2" for c in self.concepts]
        )

    def label_vector(
        self, subject: Iterable[str] = (), roles: Iterable[RoleExpr] = (), obj: Iterable[str] = ()
    ) -> np.ndarray:
        """Multi-hot label vector for a (subject concepts, roles, object concepts) assertion."""
        y = np.zeros(self.label_width, dtype=np.uint8)
        s_blk, r_blk, o_blk = self.label_blocks()
        for c in subject:
            y[s_blk.start + self.concepts.index(c)] = 1
        for c in obj:
            y[o_blk.start + self.concepts.index(c)] = 1
        for r in roles:
            for k in self.varmap.tied_keys(r):
                y[r_blk.start + self.varmap.role_keys.index(k)] = 1
        return y

    def domino_vector(
        self, subject: Iterable[str] = (), roles: Iterable[RoleExpr] = (), obj: Iterable[str] = ()
    ) -> np.ndarray:
        """Same assertion over the full domino space; restriction and auxiliary bits stay 0."""
        return self.varmap.vector(
            [AtomicPart(c) for c in subject], roles, [AtomicPart(c) for c in obj]
        )

    def project_labels(self, x: np.ndarray) -> np.ndarray:
        """Domino vectors (rows) to label vectors."""
        return np.asarray(x)[..., list(self.label_layout)]


def _compile_d0(onto: Ontology, parts: Sequence[Part], vm: VarMap, strategy: str, node_cap: int) -> Circuit:
    cnf = build_d0_cnf(onto, parts, vm)
    vt = build_vtree(vm.total, strategy)
    if cnf.num_vars == vm.total:
        return compile_cnf(cnf, vt, node_cap, varmap=vm)
    aux = range(vm.total, cnf.num_vars)
    wide = compile_cnf(cnf, extend_vtree(vt, aux, strategy), node_cap)
    projected = wide.manager.exists(wide.root, aux)
    mgr = SddManager(vt, node_cap)
    return Circuit(mgr, wide.manager.transfer(projected, mgr), vm)


def refine(d0: Circuit, parts: Sequence[Part], vm: VarMap) -> tuple[Circuit, int]:
    """
    Fixpoint of the witness-deletion steps. A domino whose side carries ∃R.C needs an
    R-successor in C, and one whose side lacks ∀R.C needs an R-successor outside C.
    Returns the circuit and the round count.
    """
    mgr = d0.manager
    restrictions = [p for p in parts if isinstance(p, RestrictionPart)]
    roles = vm.role_block()
    prev = d0.root
    rounds = 0
    while True:
        rounds += 1
        cur = prev
        for p in restrictions:
            src, tgt = source_side(p.role), target_side(p.role)
            needs_witness = p.quantifier == "forall"
            filler = mgr.literal(vm.part_var(AtomicPart(p.filler), tgt), not needs_witness)
            g = mgr.conjoin(prev, mgr.literal(vm.role_var(p.role)), filler)
            witness = mgr.exists(g, roles + vm.side_block(tgt))
            for j in (1, 2):
                if j == src:
                    wj = witness
                else:
                    wj = mgr.rename(witness, dict(zip(vm.side_block(src), vm.side_block(j))))
                # ∃: flag → witness; ∀: ¬flag → witness
                cur = mgr.apply(AND, cur, mgr.apply(OR, mgr.literal(vm.part_var(p, j), needs_witness), wj))
        logger.info("Refinement round %d: %s", rounds, "fixpoint" if cur is prev else "changed")
        if cur is prev:
            return d0.with_root(cur), rounds
        prev = cur


def derive_label_circuit(
    circuit: Circuit, vm: VarMap, concepts: Sequence[str], strategy: str = "balanced", node_cap: Optional[int] = None
) -> tuple[Circuit, tuple[int, ...]]:
    """Project C_O onto atomic-concept and role variables, renumbered 0..L-1, smoothed."""
    layout = tuple(vm.label_vars(concepts))
    keep = set(layout)
    mgr = circuit.manager
    projected = mgr.exists(circuit.canonical().root, [v for v in range(vm.total) if v not in keep])
    label_mgr = SddManager(build_vtree(len(layout), strategy), node_cap)
    root = mgr.translate(projected, label_mgr, {v: k for k, v in enumerate(layout)})
    return Circuit(label_mgr, label_mgr.smooth(root)), layout


def compile_ontology(
    onto: Ontology,
    *,
    vtree: str = "balanced",
    split_inverses: bool = False,
    node_cap: Optional[int] = None,
) -> CompiledOntology:
    if not onto.concepts:
        raise ValueError("cannot compile an ontology without concepts")
    cap = node_cap if node_cap is not None else config.DEFAULTS["node_cap"]
    start = time.perf_counter()
    normalized = normalize(onto)
    parts = tuple(extract_parts(normalized))
    vm = build_varmap(normalized, parts, split_inverses)
    logger.info("Ontology has %d parts and %d domino variables", len(parts), vm.total)
    d0 = _compile_d0(normalized, parts, vm, vtree, cap)
    circuit, rounds = refine(d0, parts, vm)
    if circuit.root.is_false:
        logger.warning("Ontology is unsatisfiable: the canonical domino set is empty")
    label, layout = derive_label_circuit(circuit, vm, onto.concepts, vtree, cap)
    meta = {
        "version": __version__,
        "vtree": vtree,
        "split_inverses": split_inverses,
        "parts": len(parts),
        "variables": vm.total,
        "label_variables": len(layout),
        "refinement_rounds": rounds,
        "refinement_reading": REFINEMENT_READING,
        "d0_nodes": d0.node_count,
        "circuit_nodes": circuit.node_count,
        "label_circuit_nodes": label.node_count,
        "satisfiable": not circuit.root.is_false,
        "seconds": round(time.perf_counter() - start, 6),
    }
    logger.info(
        "Compiled ontology: %d nodes after %d rounds, label circuit %d nodes (%.2fs)",
        meta["circuit_nodes"], rounds, meta["label_circuit_nodes"], meta["seconds"],
    )
    return CompiledOntology(onto, normalized, parts, vm, circuit, label, layout, rounds, meta)


# ---- knowledge graph checks ----


def abox_label_vectors(co: CompiledOntology, kg: KnowledgeGraphInput) -> list[tuple[str, str, np.ndarray]]:
    """
    One label vector per ordered pair of individuals linked by a role assertion, plus one
    reflexive vector per individual. inv(R)(a, b) is stored as R(b, a).
    """
    concepts = {i: set() for i in kg.individuals}
    links: dict[tuple[str, str], set[RoleExpr]] = {}
    for a in kg.abox:
        if isinstance(a, ConceptAssertion):
            concepts[a.individual].add(a.concept)
        elif isinstance(a, RoleAssertion):
            subj, obj = (a.object, a.subject) if a.role.inverted else (a.subject, a.object)
            links.setdefault((subj, obj), set()).add(RoleExpr(a.role.name))
    out = []
    for i in kg.individuals:
        roles = links.pop((i, i), set())
        out.append((i, i, co.label_vector(concepts[i], roles, concepts[i])))
    for (s, o), roles in links.items():
        out.append((s, o, co.label_vector(concepts[s], roles, concepts[o])))
    return out


# ---- bundles ----

BUNDLE_FILES = ("ontology.dsl", "varmap.tsv", "vtree.txt", "circuit.sdd", "label_vtree.txt", "label_circuit.sdd", "meta.json")


def write_bundle(co: CompiledOntology, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ontology.dsl").write_text(serialize_ontology(co.ontology), encoding="utf-8")
    with open(out_dir / "varmap.tsv", "w", encoding="utf-8") as f:
        write_varmap(co.varmap, f)
    with open(out_dir / "vtree.txt", "w", encoding="utf-8") as f:
        write_vtree(co.circuit.vtree, f)
    with open(out_dir / "circuit.sdd", "w", encoding="utf-8") as f:
        write_circuit(co.circuit, f)
    with open(out_dir / "label_vtree.txt", "w", encoding="utf-8") as f:
        write_vtree(co.label_circuit.vtree, f)
    with open(out_dir / "label_circuit.sdd", "w", encoding="utf-8") as f:
        write_circuit(co.label_circuit, f)
    with open(out_dir / "meta.json", "w", encoding="utf-8") as f:
        json.dump(co.meta, f, indent=2, sort_keys=True)
    logger.info("Wrote compiled bundle to %s", out_dir)


def load_bundle(bundle_dir: Path, node_cap: Optional[int] = None) -> CompiledOntology:
    for name in BUNDLE_FILES:
        if not (bundle_dir / name).exists():
            raise FileNotFoundError(f"bundle {bundle_dir} lacks {name}")
    try:
        meta = json.loads((bundle_dir / "meta.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"meta.json is not valid JSON: {e}") from None
    onto, _ = parse_ontology((bundle_dir / "ontology.dsl").read_text(encoding="utf-8"))
    normalized = normalize(onto)
    parts = tuple(extract_parts(normalized))
    vm = build_varmap(normalized, parts, bool(meta.get("split_inverses", False)))
    with open(bundle_dir / "varmap.tsv", encoding="utf-8") as f:
        if read_varmap_names(f) != vm.names():
            raise SchemaError("varmap.tsv does not match the bundled ontology")
    with open(bundle_dir / "vtree.txt", encoding="utf-8") as f:
        vt = read_vtree(f)
    with open(bundle_dir / "circuit.sdd", encoding="utf-8") as f:
        circuit = read_circuit(f, vt, node_cap)
    with open(bundle_dir / "label_vtree.txt", encoding="utf-8") as f:
        label_vt = read_vtree(f)
    with open(bundle_dir / "label_circuit.sdd", encoding="utf-8") as f:
        label = read_circuit(f, label_vt, node_cap)
    layout = tuple(vm.label_vars(onto.concepts))
    return CompiledOntology(
        onto, normalized, parts, vm, Circuit(circuit.manager, circuit.root, vm), label, layout,
        int(meta.get("refinement_rounds", 0)), meta,
    )
