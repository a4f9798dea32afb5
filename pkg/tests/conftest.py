"""Shared fixtures: the music ontology, its compiled bundle and seeded generators."""
from __future__ import annotations

import logging

import numpy as np
import pytest

from src.datagen import GenConfig, generate_ontology
from src.dl import AtomicPart, RoleExpr
from src.fixtures import fixture_music, fixture_unsat
from src.pipeline import compile_ontology

logging.getLogger("src").setLevel(logging.WARNING)

# Generator settings whose domino space stays small enough for the brute-force oracle.
SMALL_CONFIGS = [GenConfig(2, 1, seed=s) for s in range(25)] + [
    GenConfig(3, 1, p_disjoint=0.5, seed=s) for s in range(25)
]


@pytest.fixture(scope="session")
def music():
    return fixture_music()


@pytest.fixture(scope="session")
def music_onto(music):
    return music.parse()[0]


@pytest.fixture(scope="session")
def music_kg(music):
    return music.parse()[1]


@pytest.fixture(scope="session")
def music_co(music_onto):
    return compile_ontology(music_onto)


@pytest.fixture(scope="session")
def unsat_onto():
    return fixture_unsat().parse()[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_ontologies():
    return [generate_ontology(cfg) for cfg in SMALL_CONFIGS]


def music_vars(co):
    """Variable indices used by the worked example."""
    vm = co.varmap
    return {
        "Artist@1": vm.part_var(AtomicPart("Artist"), 1),
        "Label@1": vm.part_var(AtomicPart("Label"), 1),
        "Artist@2": vm.part_var(AtomicPart("Artist"), 2),
        "Label@2": vm.part_var(AtomicPart("Label"), 2),
        "influence": vm.role_var(RoleExpr("influence")),
        "signedTo": vm.role_var(RoleExpr("signedTo")),
    }
