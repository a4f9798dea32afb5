from __future__ import annotations

import numpy as np
import pytest

from src import fixtures
from src.datagen import SCHEMES, GenConfig, generate_ontology
from src.fixtures import (
    CHECKSUMS,
    REFERENCE_GEN,
    fixture_music,
    fixture_unsat,
    recipe_clusters,
    recipe_cnf_growth,
    recipe_table2,
    recipe_table3,
    run_plan,
)
from src.nesy import TrainConfig
from src.pipeline import compile_ontology

TINY = TrainConfig(epochs=1, minibatch=16, learning_rate=0.01, hidden=(8,), seed=0)


def test_fixtures_are_pinned(music):
    assert music.checksum == CHECKSUMS["music.dsl"]
    assert fixture_unsat().checksum == CHECKSUMS["unsat.dsl"]
    assert music.variables == 14 and len(music.parts) == 6


def test_changed_fixture_is_rejected(tmp_path, monkeypatch):
    (tmp_path / "music.dsl").write_text("concept A.\n", encoding="utf-8")
    monkeypatch.setattr(fixtures, "FIXTURE_DIR", tmp_path)
    with pytest.raises(ValueError):
        fixture_music()


def test_unsat_fixture_matches_its_record(unsat_onto):
    fx = fixture_unsat()
    co = compile_ontology(unsat_onto)
    assert co.varmap.total == fx.variables
    assert {str(p) for p in co.parts} == fx.parts


def test_table2_grid():
    plan = recipe_table2()
    assert len(plan.cells) == len(SCHEMES) * 5 * 3
    assert plan.models() == ["baseline", "sl(λ=0.01)", "sl(λ=0.001)", "sl(λ=0.0001)", "spl"]
    assert plan.gen == REFERENCE_GEN
    assert not any(c.bg for c in plan.cells)
    assert (plan.individuals, plan.n_train, plan.n_test) == (100, 1000, 500)


def test_table3_grid():
    plan = recipe_table3(seeds=(4,), schemes=("wishart",))
    assert len(plan.cells) == 3
    assert all(c.bg and c.scheme == "wishart" and c.seed == 4 for c in plan.cells)
    assert plan.schemes == ("wishart",)


def _tiny_plan(**overrides):
    scale = dict(individuals=10, n_train=20, n_test=10, schemes=("identity",), train_cfg=TINY)
    scale.update(overrides)
    return recipe_table2((0,), GenConfig(3, 2, seed=1), **scale)


def test_run_plan_report():
    report = run_plan(_tiny_plan())
    assert report["recipe"] == "table2"
    assert len(report["cells"]) == 5
    assert set(report["summary"]["identity"]) == set(_tiny_plan().models())
    spl = report["summary"]["identity"]["spl"]
    assert spl["consistent"]["mean"] == 1.0
    lines = report["table"].splitlines()
    assert lines[1] == "scheme\tmodel\tf1\texact_match\tconsistent"
    assert len(lines) == 2 + 5


def test_run_plan_workers_do_not_change_results():
    plan = _tiny_plan()
    co = compile_ontology(generate_ontology(plan.gen))
    one = run_plan(plan, co, workers=1)
    many = run_plan(plan, co, workers=3)
    assert one["cells"] == many["cells"]


def test_recipe_clusters(tmp_path):
    rows = recipe_clusters(0, k=20, n_concepts=3, n_roles=1, schemes=("identity",), out_dir=tmp_path, train_cfg=TINY)
    assert [r["scheme"] for r in rows] == ["identity"]
    assert 0.0 <= rows[0]["most_frequent"] <= 1.0
    assert 0.0 <= rows[0]["mlp"] <= 1.0
    lines = (tmp_path / "observations_identity.csv").read_text().splitlines()
    assert lines[0] == "C0,C1,C2,concept"
    assert len(lines) == 1 + 3 * 20


def test_recipe_cnf_growth():
    rows = recipe_cnf_growth((3, 6), (2,), (0,))
    assert [r["n_concepts"] for r in rows] == [3, 6]
    assert rows[1]["clauses"] > rows[0]["clauses"]


@pytest.mark.slow
def test_spl_is_always_consistent_at_scale():
    cfg = TrainConfig(epochs=10, minibatch=64, learning_rate=0.001, hidden=(128, 128), seed=0)
    for recipe in (recipe_table2, recipe_table3):
        plan = recipe((0,), individuals=40, n_train=500, n_test=200, train_cfg=cfg)
        report = run_plan(plan, workers=4)
        for cell in report["cells"]:
            if cell["mode"] == "spl":
                assert cell["consistent"] == 1.0
        for scheme in plan.schemes:
            models = report["summary"][scheme]
            spl = "spl" if "spl" in models else "spl+bg"
            assert models[spl]["consistent"]["mean"] >= max(m["consistent"]["mean"] for m in models.values()) - 1e-12


@pytest.mark.slow
def test_cluster_study_beats_majority():
    rows = recipe_clusters(0, k=200, schemes=("identity", "diag-normal"))
    for r in rows:
        assert r["mlp"] > r["most_frequent"]


def test_evaluation_vectors_are_label_width(music, music_co):
    for ev in music.evaluations:
        assert fixtures.evaluation_vector(music_co, ev).shape == (music_co.label_width,)
    assert np.array_equal(
        fixtures.evaluation_vector(music_co, music.evaluations[0]), np.array([0, 1, 1, 0, 1, 0], dtype=np.uint8)
    )
