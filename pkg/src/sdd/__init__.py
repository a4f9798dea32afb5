# Circuit engine: vtrees, canonical SDD nodes, transformations and serialization.
from src.sdd.circuit import (
    Circuit,
    EvalPlan,
    apply,
    check_properties,
    compile_cnf,
    condition,
    conjoin,
    disjoin,
    enumerate_models,
    exists,
    literal_circuit,
    model_count,
    negate,
    smooth,
)
from src.sdd.io import read_circuit, write_circuit
from src.sdd.manager import AND, OR, Node, SddManager
from src.sdd.vtree import VTree, build_vtree, extend_vtree, read_vtree, write_vtree

__all__ = [
    "AND", "OR", "Circuit", "EvalPlan", "Node", "SddManager", "VTree",
    "apply", "build_vtree", "check_properties", "compile_cnf", "condition", "conjoin", "disjoin",
    "enumerate_models", "exists", "extend_vtree", "literal_circuit", "model_count", "negate",
    "read_circuit", "read_vtree", "smooth", "write_circuit", "write_vtree",
]
