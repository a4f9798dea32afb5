from __future__ import annotations

import numpy as np
import pytest

from src.datagen import (
    SCHEMES,
    ZERO_SCHEME,
    GenConfig,
    cluster_observations,
    cnf_grid_stats,
    generate_ontology,
    read_dataset,
    read_kg,
    sample_covariance,
    sample_individuals,
    sample_kg,
    synthesize_dataset,
    write_dataset,
    write_kg,
)
from src.dl import SubClassOf
from src.errors import SchemaError
from src.infer import Parameterization, evaluate_batch, sample_each
from src.pipeline import compile_ontology


@pytest.fixture(scope="module")
def small_co():
    return compile_ontology(generate_ontology(GenConfig(4, 2, seed=3)))


def test_generator_is_deterministic():
    a = generate_ontology(GenConfig(5, 3, seed=9))
    b = generate_ontology(GenConfig(5, 3, seed=9))
    assert a == b
    assert a.concepts == ("C0", "C1", "C2", "C3", "C4")
    assert a.roles == ("R0", "R1", "R2")


def test_generator_probabilities():
    onto = generate_ontology(GenConfig(5, 2, p_domain=0.0, p_range=0.0, p_disjoint=1.0))
    assert len(onto.tbox) == 10
    onto = generate_ontology(GenConfig(5, 2, p_domain=1.0, p_range=1.0, p_disjoint=0.0))
    assert len(onto.tbox) == 4
    assert all(isinstance(ax, SubClassOf) for ax in onto.tbox)


@pytest.mark.parametrize(
    "kwargs",
    [{"n_concepts": 0, "n_roles": 1}, {"n_concepts": 2, "n_roles": -1}, {"n_concepts": 2, "n_roles": 1, "p_domain": 1.5}],
)
def test_generator_config_errors(kwargs):
    with pytest.raises(ValueError):
        GenConfig(**kwargs)


def test_individuals_come_from_models(small_co):
    ind = sample_individuals(small_co, 30, np.random.default_rng(0))
    assert ind.shape == (30, small_co.varmap.n_parts)
    ev = np.full((30, small_co.varmap.total), -1)
    ev[:, small_co.varmap.side_block(1)] = ind
    _, ok = sample_each(small_co.smoothed, Parameterization.uniform(small_co.varmap.total), ev, np.random.default_rng(1))
    assert ok.all()


def test_unsat_has_no_individuals(unsat_onto):
    with pytest.raises(ValueError):
        sample_individuals(compile_ontology(unsat_onto), 3, np.random.default_rng(0))


def test_kg_assertions_are_consistent(small_co):
    rng = np.random.default_rng(4)
    ind = sample_individuals(small_co, 12, rng)
    kg = sample_kg(small_co, ind, rng)
    vm = small_co.varmap
    assert len(kg.pairs) + len(kg.skipped) == 12 * 13 // 2
    assert all(i <= j for i, j in kg.pairs)
    assert evaluate_batch(small_co.circuit, kg.assertions).all()
    for (i, j), a in zip(kg.pairs, kg.assertions):
        assert np.array_equal(a[vm.side_block(1)], ind[i])
        assert np.array_equal(a[vm.side_block(2)], ind[j])
    assert kg.diagnostics["pairs"] == len(kg.pairs)


def test_music_kg(music_co):
    rng = np.random.default_rng(0)
    kg = sample_kg(music_co, sample_individuals(music_co, 8, rng), rng)
    assert evaluate_batch(music_co.circuit, kg.assertions).all()


@pytest.mark.parametrize("scheme", SCHEMES)
def test_covariances_are_positive_definite(scheme):
    cov = sample_covariance(scheme, 5, np.zeros(5), np.random.default_rng(0))
    assert cov.shape == (5, 5)
    assert np.allclose(cov, cov.T)
    np.linalg.cholesky(cov)
    again = sample_covariance(scheme, 5, np.zeros(5), np.random.default_rng(0))
    assert np.array_equal(cov, again)
    shifted = sample_covariance(scheme, 5, np.ones(5), np.random.default_rng(0))
    assert np.array_equal(cov, shifted)


def test_covariance_errors():
    with pytest.raises(ValueError):
        sample_covariance("banana", 3, np.zeros(3), np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_covariance("identity", 0, np.zeros(0), np.random.default_rng(0))
    with pytest.raises(ValueError, match="does not match"):
        sample_covariance("identity", 3, np.zeros(4), np.random.default_rng(0))
    assert not sample_covariance(ZERO_SCHEME, 3, np.zeros(3), np.random.default_rng(0)).any()


def test_noiseless_dataset(small_co):
    rng = np.random.default_rng(5)
    kg = sample_kg(small_co, sample_individuals(small_co, 6, rng), rng)
    meta = {}
    ds = synthesize_dataset(kg, small_co, ZERO_SCHEME, 3, rng, meta)
    assert len(ds) == 3 * len(kg.pairs)
    assert ds.width == small_co.label_width
    assert np.array_equal(ds.rows, ds.targets.astype(np.float64))
    assert evaluate_batch(small_co.label_circuit, ds.targets).all()
    assert meta["scheme"] == ZERO_SCHEME
    assert len(meta["individual_covariances"]) == 6


def test_noisy_dataset_keeps_targets(small_co):
    rng = np.random.default_rng(6)
    kg = sample_kg(small_co, sample_individuals(small_co, 5, rng), rng)
    ds = synthesize_dataset(kg, small_co, "wishart", 4, rng)
    assert not np.array_equal(ds.rows, ds.targets.astype(np.float64))
    assert set(np.unique(ds.targets)) <= {0, 1}
    train, test = ds.split(10, np.random.default_rng(0))
    assert len(train) == 10 and len(test) == len(ds) - 10


def test_dataset_file_round_trip(tmp_path, small_co):
    rng = np.random.default_rng(7)
    kg = sample_kg(small_co, sample_individuals(small_co, 4, rng), rng)
    ds = synthesize_dataset(kg, small_co, "identity", 2, rng)
    write_dataset(ds, tmp_path / "d.csv")
    again = read_dataset(tmp_path / "d.csv")
    assert np.array_equal(again.rows, ds.rows)
    assert np.array_equal(again.targets, ds.targets)
    assert np.array_equal(again.pairs, ds.pairs)


def test_dataset_file_errors(tmp_path):
    bad = tmp_path / "d.csv"
    bad.write_text("a,b,c\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_dataset(bad)
    bad.write_text("x_0,y_0,subj_id,obj_id\n1.0,1\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_dataset(bad)
    bad.write_text("x_0,y_0,subj_id,obj_id\nabc,1,0,0\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_dataset(bad)


def test_kg_file_errors(tmp_path, small_co):
    ind = sample_individuals(small_co, 2, np.random.default_rng(0))
    bad = tmp_path / "kg.tsv"
    bad.write_text("i\tj\troles\tdomino\n0\t1\t0\t01\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_kg(bad, ind, small_co)
    bad.write_text("pairs\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_kg(bad, ind, small_co)


def test_kg_file_round_trip(tmp_path, small_co):
    rng = np.random.default_rng(8)
    ind = sample_individuals(small_co, 5, rng)
    kg = sample_kg(small_co, ind, rng)
    write_kg(kg, small_co, tmp_path / "kg.tsv")
    again = read_kg(tmp_path / "kg.tsv", ind, small_co)
    assert again.pairs == kg.pairs
    assert np.array_equal(again.assertions, kg.assertions)


def test_cluster_study(small_co):
    study = cluster_observations(small_co, 20, "diag-normal", np.random.default_rng(0))
    nc = len(small_co.concepts)
    assert study.observations.shape == (20 * nc, nc)
    assert np.bincount(study.labels).tolist() == [20] * nc
    assert len(study.covariances) == nc


def test_cnf_grid_grows_with_concepts():
    rows = cnf_grid_stats([3, 6], [2], [0, 1])
    assert len(rows) == 4
    by_nc = {nc: max(r["clauses"] for r in rows if r["n_concepts"] == nc) for nc in (3, 6)}
    assert by_nc[6] > by_nc[3]
    assert {"n_concepts", "n_roles", "seed", "parts", "clauses", "variables"} <= set(rows[0])
