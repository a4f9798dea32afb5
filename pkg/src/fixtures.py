"""
Frozen fixtures and experiment recipes. Fixture sources live in fixtures/ and are
pinned by checksum; recipes are pure functions of their seeds and return
JSON-ready reports plus a plain-text table.
"""
from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from src.datagen import (
    SCHEMES,
    GenConfig,
    ObservationDataset,
    cluster_observations,
    cnf_grid_stats,
    generate_ontology,
    sample_individuals,
    sample_kg,
    synthesize_dataset,
    write_observations,
)
from src.dl import KnowledgeGraphInput, Ontology, RoleExpr, parse_ontology
from src.nesy import Metrics, TrainConfig, aggregate, evaluate_model, train
from src.nesy.metrics import format_cell
from src.nesy.train import most_frequent_accuracy, train_classifier
from src.pipeline import CompiledOntology, compile_ontology

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"

CHECKSUMS = {
    "music.dsl": "a1e5dc409eb0fa585bc68e1e48424fa93a942633c09c39d50dd21106b0111f8c",
    "unsat.dsl": "604fd01ac2d9da9d5351934f0c1d8e6f5dda471e92441ce157f446271c4bffca",
}

INSTANCE_NOTE = (
    "cells come from freshly generated ontologies and datasets; only guarantees "
    "(consistency of SPL) and orderings are comparable with other instances"
)


@dataclass(frozen=True)
class Evaluation:
    subject: tuple[str, ...]
    roles: tuple[str, ...]
    obj: tuple[str, ...]
    expected: int


@dataclass(frozen=True)
class Fixture:
    name: str
    source: str
    checksum: str
    parts: frozenset[str] = frozenset()
    variables: int = 0
    evaluations: tuple[Evaluation, ...] = ()
    seeds: tuple[int, ...] = (0, 1, 2)

    def parse(self) -> tuple[Ontology, KnowledgeGraphInput]:
        return parse_ontology(self.source)


def _load(name: str) -> tuple[str, str]:
    raw = (FIXTURE_DIR / name).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != CHECKSUMS[name]:
        raise ValueError(f"fixture {name} changed on disk (sha256 {digest[:12]}...)")
    return raw.decode("utf-8"), digest


def fixture_music() -> Fixture:
    """Two disjoint concepts, influence between artists, artists signed to labels; three individuals."""
    source, digest = _load("music.dsl")
    return Fixture(
        name="music",
        source=source,
        checksum=digest,
        parts=frozenset(
            {"Artist", "Label", "∀influence.Artist", "∀influence⁻.Artist", "∀signedTo.Label", "∀signedTo⁻.Artist"}
        ),
        variables=14,
        evaluations=(
            Evaluation(("Label",), ("influence",), ("Artist",), 0),
            Evaluation(("Artist",), ("influence",), ("Artist",), 1),
            Evaluation(("Artist",), ("signedTo",), ("Label",), 1),
            Evaluation(("Artist",), ("signedTo",), ("Artist",), 0),
            Evaluation(("Artist", "Label"), (), (), 0),
        ),
    )


def fixture_unsat() -> Fixture:
    source, digest = _load("unsat.dsl")
    return Fixture(name="unsat", source=source, checksum=digest, parts=frozenset({"A"}), variables=2)


def evaluation_vector(co: CompiledOntology, ev: Evaluation) -> np.ndarray:
    """Label vector of the assertion; restriction parts are left to the label circuit's projection."""
    return co.label_vector(ev.subject, [RoleExpr(r) for r in ev.roles], ev.obj)


# ---- neuro-symbolic tables ----


@dataclass(frozen=True)
class Cell:
    scheme: str
    model: str  # row label
    mode: str
    lam: float
    bg: bool
    seed: int


@dataclass
class ExperimentPlan:
    name: str
    gen: GenConfig
    individuals: int
    n_train: int
    n_test: int
    schemes: tuple[str, ...]
    cells: list[Cell] = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)

    def models(self) -> list[str]:
        return list(dict.fromkeys(c.model for c in self.cells))


REFERENCE_GEN = GenConfig(n_concepts=10, n_roles=5, p_domain=0.5, p_range=0.5, p_disjoint=1.0, seed=0)
SL_LAMBDAS = (0.01, 0.001, 0.0001)


def recipe_table2(seeds: Sequence[int] = (0, 1, 2), gen: GenConfig = REFERENCE_GEN, **scale: Any) -> ExperimentPlan:
    """Joint multilabel classification: baseline, SL for three weights, SPL; every scheme and seed."""
    rows = [("baseline", "baseline", 0.0)] + [(f"sl(λ={lam:g})", "sl", lam) for lam in SL_LAMBDAS] + [("spl", "spl", 0.0)]
    cells = [Cell(s, label, mode, lam, False, seed) for s in SCHEMES for label, mode, lam in rows for seed in seeds]
    return _plan("table2", gen, cells, **scale)


def recipe_table3(seeds: Sequence[int] = (0, 1, 2), gen: GenConfig = REFERENCE_GEN, **scale: Any) -> ExperimentPlan:
    """Link prediction with the subject/object concepts given as evidence."""
    rows = [("baseline+bg", "baseline", 0.0), ("sl+bg(λ=0.01)", "sl", 0.01), ("spl+bg", "spl", 0.0)]
    cells = [Cell(s, label, mode, lam, True, seed) for s in SCHEMES for label, mode, lam in rows for seed in seeds]
    return _plan("table3", gen, cells, **scale)


def _plan(
    name: str,
    gen: GenConfig,
    cells: list[Cell],
    individuals: int = 100,
    n_train: int = 1000,
    n_test: int = 500,
    schemes: Optional[Sequence[str]] = None,
    train_cfg: Optional[TrainConfig] = None,
) -> ExperimentPlan:
    if schemes is not None:
        cells = [c for c in cells if c.scheme in schemes]
    return ExperimentPlan(
        name, gen, individuals, n_train, n_test, tuple(schemes or SCHEMES), cells, train_cfg or TrainConfig()
    )


def _datasets(plan: ExperimentPlan, co: CompiledOntology) -> dict[str, tuple[ObservationDataset, ObservationDataset]]:
    rng = np.random.default_rng(plan.gen.seed)
    kg = sample_kg(co, sample_individuals(co, plan.individuals, rng), rng)
    logger.info("Knowledge graph: %s", kg.diagnostics)
    out = {}
    for k, scheme in enumerate(plan.schemes):
        srng = np.random.default_rng([plan.gen.seed, k])
        ds = synthesize_dataset(kg, co, scheme, 1, srng)
        if len(ds) < plan.n_train + plan.n_test:
            logger.warning("Dataset for %s has only %d rows", scheme, len(ds))
        train_ds, rest = ds.split(min(plan.n_train, len(ds)), srng)
        out[scheme] = (train_ds, rest.subset(np.arange(min(plan.n_test, len(rest)))))
    return out


def run_plan(plan: ExperimentPlan, co: Optional[CompiledOntology] = None, workers: int = 1) -> dict[str, Any]:
    """Train and evaluate every cell; cells are independent and may run on a thread pool."""
    start = time.perf_counter()
    co = co or compile_ontology(generate_ontology(plan.gen))
    data = _datasets(plan, co)

    def run(cell: Cell) -> Metrics:
        train_ds, test_ds = data[cell.scheme]
        cfg = TrainConfig(**{**asdict(plan.train), "seed": cell.seed})
        model = train(co, train_ds, cell.mode, cell.lam, cell.bg, cfg).model
        m = evaluate_model(model, test_ds)
        logger.info("%s %s seed %d: %s", cell.scheme, cell.model, cell.seed, m)
        return m

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, plan.cells))
    else:
        results = [run(c) for c in plan.cells]

    cells = [{**asdict(c), **m.as_dict()} for c, m in zip(plan.cells, results)]
    summary: dict[str, dict[str, Any]] = {}
    for scheme in plan.schemes:
        for model in plan.models():
            runs = [m for c, m in zip(plan.cells, results) if c.scheme == scheme and c.model == model]
            if runs:
                summary.setdefault(scheme, {})[model] = aggregate(runs)
    report = {
        "recipe": plan.name,
        "note": INSTANCE_NOTE,
        "generator": asdict(plan.gen),
        "individuals": plan.individuals,
        "n_train": plan.n_train,
        "n_test": plan.n_test,
        "cells": cells,
        "summary": summary,
        "seconds": round(time.perf_counter() - start, 3),
    }
    report["table"] = render_table(report)
    return report


def render_table(report: dict[str, Any]) -> str:
    cols = ("f1", "exact_match", "consistent")
    lines = [f"# {report['recipe']}: {report['note']}", "scheme\tmodel\t" + "\t".join(cols)]
    for scheme, models in report["summary"].items():
        for model, summary in models.items():
            lines.append(f"{scheme}\t{model}\t" + "\t".join(format_cell(summary, c) for c in cols))
    return "\n".join(lines) + "\n"


# ---- cluster study and CNF growth ----


def recipe_clusters(
    seed: int = 0,
    k: int = 200,
    n_concepts: int = 5,
    n_roles: int = 3,
    schemes: Sequence[str] = SCHEMES,
    out_dir: Optional[Path] = None,
    train_cfg: Optional[TrainConfig] = None,
) -> list[dict[str, Any]]:
    """Per-concept observation clusters; accuracy of a most-frequent baseline and a three-layer MLP."""
    gen = GenConfig(n_concepts, n_roles, 0.5, 0.5, 1.0, seed)
    co = compile_ontology(generate_ontology(gen))
    rows = []
    for n, scheme in enumerate(schemes):
        rng = np.random.default_rng([seed, n])
        study = cluster_observations(co, k, scheme, rng)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_observations(study, co.concepts, out_dir / f"observations_{scheme}.csv")
        order = rng.permutation(len(study.labels))
        cut = int(0.8 * len(order))
        tr, te = order[:cut], order[cut:]
        clf = train_classifier(
            study.observations[tr], study.labels[tr], len(co.concepts), (128, 128, 128), train_cfg or TrainConfig(seed=seed)
        )
        rows.append(
            {
                "scheme": scheme,
                "most_frequent": most_frequent_accuracy(study.labels[tr], study.labels[te]),
                "mlp": float(np.mean(clf.predict(study.observations[te]) == study.labels[te])),
            }
        )
        logger.info("Cluster study %s: %s", scheme, rows[-1])
    return rows


def recipe_cnf_growth(
    concept_counts: Sequence[int] = (5, 10, 25),
    role_counts: Sequence[int] = (5,),
    seeds: Sequence[int] = (0,),
) -> list[dict[str, Any]]:
    return cnf_grid_stats(concept_counts, role_counts, seeds)
