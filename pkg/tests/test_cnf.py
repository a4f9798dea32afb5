from __future__ import annotations

import io
import itertools

import numpy as np
import pytest

from src.cnf import (
    Lit,
    build_d0_cnf,
    build_varmap,
    cbf,
    conj,
    d0_formulas,
    disj,
    evaluate_formula,
    neg,
    read_dimacs,
    read_varmap_names,
    source_side,
    target_side,
    write_dimacs,
    write_varmap,
)
from src.dl import AtomicPart, Atomic, Not, Or, RoleExpr, extract_parts, normalize
from src.errors import SchemaError, UnknownNameError
from src.oracle import oracle_cnf_models, oracle_d0


def _varmap(onto, split=False):
    norm = normalize(onto)
    parts = extract_parts(norm)
    return norm, parts, build_varmap(norm, parts, split)


def test_music_layout(music_onto):
    _, parts, vm = _varmap(music_onto)
    assert vm.total == 14
    assert vm.part_var(AtomicPart("Artist"), 1) == 0
    assert vm.role_var(RoleExpr("influence")) == 6
    assert vm.role_var(RoleExpr("influence", True)) == 6
    assert vm.part_var(AtomicPart("Artist"), 2) == 8
    assert vm.names()[:2] == ["Artist@1", "Label@1"]
    assert vm.names()[6:8] == ["influence", "signedTo"]
    assert vm.side_block(2) == list(range(8, 14))


def test_split_inverses_layout(music_onto):
    _, _, vm = _varmap(music_onto, split=True)
    assert vm.total == 16
    assert vm.role_var(RoleExpr("influence")) != vm.role_var(RoleExpr("influence", True))


def test_unknown_part():
    from src.dl import parse_ontology

    onto, _ = parse_ontology("concept A.\n")
    _, _, vm = _varmap(onto)
    with pytest.raises(UnknownNameError):
        vm.part_var(AtomicPart("B"), 1)
    with pytest.raises(ValueError):
        vm.part_var(AtomicPart("A"), 3)


def test_sides():
    r = RoleExpr("R")
    assert (source_side(r), target_side(r)) == (1, 2)
    assert (source_side(r.inverse()), target_side(r.inverse())) == (2, 1)


def test_formula_simplification():
    a, b = Lit(0), Lit(1)
    assert conj(a, conj(b)) == conj(a, b)
    assert neg(neg(a)) == a
    assert evaluate_formula(disj(a, neg(b)), [0, 0])
    assert not evaluate_formula(conj(a, neg(b)), [1, 1])


def test_cbf_of_concepts(music_onto):
    _, _, vm = _varmap(music_onto)
    f = cbf(Or(Atomic("Artist"), Not(Atomic("Label"))), 2, vm)
    x = np.zeros(vm.total, dtype=np.uint8)
    assert evaluate_formula(f, x)
    x[vm.part_var(AtomicPart("Label"), 2)] = 1
    assert not evaluate_formula(f, x)


def test_d0_cnf_matches_formulas(music_onto):
    norm, parts, vm = _varmap(music_onto)
    formulas = d0_formulas(norm, parts, vm)
    cnf = build_d0_cnf(norm, parts, vm)
    models = oracle_cnf_models(cnf.num_vars, cnf.clauses, keep=vm.total)
    for bits in itertools.islice(itertools.product((0, 1), repeat=vm.total), 0, None, 7):
        assert (bits in models) == all(evaluate_formula(f, bits) for f in formulas)


def test_d0_cnf_equals_oracle(small_ontologies):
    for onto in small_ontologies[:20]:
        norm, parts, vm = _varmap(onto)
        cnf = build_d0_cnf(norm, parts, vm)
        if cnf.num_vars > 22:
            continue
        assert oracle_cnf_models(cnf.num_vars, cnf.clauses, keep=vm.total) == oracle_d0(onto)


def test_cnf_stats(music_onto):
    norm, parts, vm = _varmap(music_onto)
    stats = build_d0_cnf(norm, parts, vm).stats()
    assert stats["variables"] >= vm.total
    assert stats["clauses"] > 0
    assert stats["avg_clause_width"] >= 1.0


def test_dimacs_round_trip(music_onto):
    norm, parts, vm = _varmap(music_onto)
    cnf = build_d0_cnf(norm, parts, vm)
    buf = io.StringIO()
    write_dimacs(cnf, buf)
    again = read_dimacs(io.StringIO(buf.getvalue()))
    assert again.num_vars == cnf.num_vars
    assert again.clauses == cnf.clauses


@pytest.mark.parametrize(
    "text",
    [
        "1 2 0\n",
        "p cnf 2 1\n1 3 0\n",
        "p cnf 2 2\n1 2 0\n",
        "p cnf x 1\n1 0\n",
        "p cnf 2 1\n1 a 0\n",
    ],
)
def test_dimacs_errors(text):
    with pytest.raises(SchemaError):
        read_dimacs(io.StringIO(text))


def test_dimacs_comments_and_trailing_clause():
    cnf = read_dimacs(io.StringIO("c hello\np cnf 3 2\n1 -2 0\n3\n"))
    assert cnf.clauses == [(1, -2), (3,)]


def test_varmap_file(music_onto):
    _, _, vm = _varmap(music_onto)
    buf = io.StringIO()
    write_varmap(vm, buf)
    assert read_varmap_names(io.StringIO(buf.getvalue())) == vm.names()
    with pytest.raises(SchemaError):
        read_varmap_names(io.StringIO("nope\n"))
