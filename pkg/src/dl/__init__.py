# ALCI syntax, DSL parser/writer and normalization passes.
from src.dl.normalize import extract_parts, flatten, normalize, to_nnf
from src.dl.parser import parse_ontology, render_concept, serialize_ontology
from src.dl.syntax import (
    BOTTOM,
    TOP,
    And,
    Atomic,
    AtomicPart,
    Bottom,
    ConceptAssertion,
    ConceptExpr,
    EquivalentTo,
    Exists,
    Forall,
    KnowledgeGraphInput,
    Not,
    Ontology,
    Or,
    Part,
    RestrictionPart,
    RoleAssertion,
    RoleExpr,
    SubClassOf,
    Top,
)

__all__ = [
    "BOTTOM", "TOP", "And", "Atomic", "AtomicPart", "Bottom", "ConceptAssertion", "ConceptExpr",
    "EquivalentTo", "Exists", "Forall", "KnowledgeGraphInput", "Not", "Ontology", "Or", "Part",
    "RestrictionPart", "RoleAssertion", "RoleExpr", "SubClassOf", "Top",
    "extract_parts", "flatten", "normalize", "parse_ontology", "render_concept", "serialize_ontology", "to_nnf",
]
