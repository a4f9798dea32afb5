"""
Synthetic data: random ALCI ontologies, knowledge graphs sampled from a compiled
circuit, and real-valued observation datasets drawn around the KG's label vectors.
Also the per-concept cluster study and CNF size statistics over a generator grid.
Everything is a pure function of the seed / Generator passed in.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np
from scipy import stats

from src import config
from src.cnf import build_d0_cnf, build_varmap
from src.dl import (
    TOP,
    Atomic,
    AtomicPart,
    Forall,
    Not,
    Ontology,
    RoleExpr,
    SubClassOf,
    extract_parts,
    normalize,
    serialize_ontology,
)
from src.dl.syntax import or_all
from src.errors import SchemaError
from src.infer import Parameterization, sample, sample_each

if TYPE_CHECKING:
    from src.pipeline import CompiledOntology

logger = logging.getLogger(__name__)

SCHEMES = ("identity", "diag-normal", "wishart", "inv-wishart")
ZERO_SCHEME = "zero"  # noiseless rows, for tests

DIAG_FLOOR = 1e-3


@dataclass(frozen=True)
class GenConfig:
    n_concepts: int
    n_roles: int
    p_domain: float = 0.5
    p_range: float = 0.5
    p_disjoint: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_concepts < 1:
            raise ValueError("n_concepts must be at least 1")
        if self.n_roles < 0:
            raise ValueError("n_roles must be nonnegative")
        for name in ("p_domain", "p_range", "p_disjoint"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


def generate_ontology(cfg: GenConfig) -> Ontology:
    """Pairwise disjointness axioms, then a domain and a range axiom per role."""
    rng = np.random.default_rng(cfg.seed)
    concepts = tuple(f"C{i}" for i in range(cfg.n_concepts))
    roles = tuple(f"R{i}" for i in range(cfg.n_roles))
    tbox: list[SubClassOf] = []
    for a, b in itertools.combinations(concepts, 2):
        if rng.random() < cfg.p_disjoint:
            tbox.append(SubClassOf(Atomic(a), Not(Atomic(b))))
    for r in roles:
        for inverted, p in ((True, cfg.p_domain), (False, cfg.p_range)):
            members = [Atomic(c) for c in concepts if rng.random() < p]
            if members:
                tbox.append(SubClassOf(TOP, Forall(RoleExpr(r, inverted), or_all(members))))
    logger.info("Generated ontology: %d concepts, %d roles, %d axioms", len(concepts), len(roles), len(tbox))
    return Ontology(concepts, roles, tuple(tbox))


# ---- knowledge graphs ----


@dataclass
class SyntheticKG:
    individuals: np.ndarray  # (m, parts) side-1 part vectors e_i
    pairs: list[tuple[int, int]] = field(default_factory=list)
    assertions: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.uint8))  # full domino rows a_ij
    skipped: list[tuple[int, int]] = field(default_factory=list)

    @property
    def diagnostics(self) -> dict[str, int]:
        return {"individuals": len(self.individuals), "pairs": len(self.pairs), "skipped_pairs": len(self.skipped)}


def sample_individuals(co: CompiledOntology, m: int, rng: np.random.Generator) -> np.ndarray:
    """m side-1 part vectors, each the subject block of a uniformly drawn domino."""
    if not co.satisfiable:
        raise ValueError("cannot sample individuals from an unsatisfiable ontology")
    c = co.smoothed
    draws = sample(c, Parameterization.uniform(co.varmap.total), rng=rng, n=m)
    return draws[:, co.varmap.side_block(1)]


def sample_kg(co: CompiledOntology, individuals: np.ndarray, rng: np.random.Generator) -> SyntheticKG:
    """One domino per pair i <= j, conditioned on e_i as subject and e_j as object."""
    vm = co.varmap
    m = len(individuals)
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    evidence = np.full((len(pairs), vm.total), -1, dtype=np.int8)
    s_blk, o_blk = vm.side_block(1), vm.side_block(2)
    for k, (i, j) in enumerate(pairs):
        evidence[k, s_blk] = individuals[i]
        evidence[k, o_blk] = individuals[j]
    draws, ok = sample_each(co.smoothed, Parameterization.uniform(vm.total), evidence, rng)
    kept = [p for p, good in zip(pairs, ok) if good]
    skipped = [p for p, good in zip(pairs, ok) if not good]
    if skipped:
        logger.warning("Skipped %d of %d individual pairs with no consistent roles", len(skipped), len(pairs))
    return SyntheticKG(np.asarray(individuals, dtype=np.uint8), kept, draws[ok], skipped)


# ---- covariances and observation datasets ----


def sample_covariance(
    scheme: str, dim: int, mean_vector: np.ndarray, rng: np.random.Generator, retries: Optional[int] = None
) -> np.ndarray:
    """
    Symmetric positive definite dim x dim matrix for one of the generator schemes.
    `mean_vector` is the generator's mean; it fixes the dimension but not the scale
    (Wishart draws use df = dim + 2 and an identity scale).
    """
    if dim < 1:
        raise ValueError("covariance dimension must be at least 1")
    if np.shape(mean_vector) != (dim,):
        raise ValueError(f"mean vector of shape {np.shape(mean_vector)} does not match dimension {dim}")
    if scheme == ZERO_SCHEME:
        return np.zeros((dim, dim))
    if scheme not in SCHEMES:
        raise ValueError(f"unknown covariance scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    if scheme == "identity":
        return np.eye(dim)
    tries = retries if retries is not None else config.DEFAULTS["covariance_retries"]
    for attempt in range(tries):
        if scheme == "diag-normal":
            cov = np.diag(np.maximum(np.abs(rng.standard_normal(dim)), DIAG_FLOOR))
        else:
            dist = stats.wishart if scheme == "wishart" else stats.invwishart
            cov = np.asarray(dist(df=dim + 2, scale=np.eye(dim)).rvs(random_state=rng), dtype=np.float64).reshape(dim, dim)
            cov = (cov + cov.T) / 2
        try:
            np.linalg.cholesky(cov)
            return cov
        except np.linalg.LinAlgError:
            logger.warning("Covariance draw %d for %s was not positive definite, retrying", attempt + 1, scheme)
    raise ValueError(f"no positive definite {scheme} covariance after {tries} draws")


@dataclass
class ObservationDataset:
    rows: np.ndarray  # (N, n) float64
    targets: np.ndarray  # (N, n) uint8
    pairs: np.ndarray  # (N, 2) individual ids

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def subset(self, idx: np.ndarray) -> ObservationDataset:
        return ObservationDataset(self.rows[idx], self.targets[idx], self.pairs[idx])

    def split(self, n_train: int, rng: np.random.Generator) -> tuple[ObservationDataset, ObservationDataset]:
        order = rng.permutation(len(self))
        return self.subset(order[:n_train]), self.subset(order[n_train:])


def _gaussian(mean: np.ndarray, cov: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    if not cov.any():
        return np.tile(mean.astype(np.float64), (k, 1))
    return rng.multivariate_normal(mean, cov, size=k)


def _checksum(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()[:16]


def synthesize_dataset(
    kg: SyntheticKG,
    co: CompiledOntology,
    scheme: str,
    samples_per_pair: int,
    rng: np.random.Generator,
    meta: Optional[dict[str, Any]] = None,
) -> ObservationDataset:
    """
    Rows [s; r; o]: s and o around each individual's atomic-concept vector, r around the
    pair's role combination. Targets are the label projections of the pair's domino.
    Role-combination generators are created on first use. If `meta` is given,
    covariance checksums are recorded in it.
    """
    vm = co.varmap
    concept_idx = [vm.parts.index(AtomicPart(c)) for c in co.concepts]
    nc, nr = len(concept_idx), len(vm.role_keys)
    means = kg.individuals[:, concept_idx].astype(np.float64)
    covs = [sample_covariance(scheme, nc, m, rng) for m in means]
    role_covs: dict[tuple[int, ...], np.ndarray] = {}
    rows, targets, ids = [], [], []
    for (i, j), a in zip(kg.pairs, kg.assertions):
        label = co.project_labels(a)
        combo = tuple(int(b) for b in a[vm.role_block()])
        if combo not in role_covs and nr:
            role_covs[combo] = sample_covariance(scheme, nr, np.array(combo, dtype=np.float64), rng)
        s = _gaussian(means[i], covs[i], samples_per_pair, rng)
        o = _gaussian(means[j], covs[j], samples_per_pair, rng)
        if nr:
            r = _gaussian(np.array(combo, dtype=np.float64), role_covs[combo], samples_per_pair, rng)
        else:
            r = np.zeros((samples_per_pair, 0))
        rows.append(np.hstack([s, r, o]))
        targets.append(np.tile(label, (samples_per_pair, 1)))
        ids.append(np.tile([i, j], (samples_per_pair, 1)))
    width = 2 * nc + nr
    if meta is not None:
        meta["scheme"] = scheme
        meta["individual_covariances"] = [_checksum(c) for c in covs]
        meta["role_covariances"] = {"".join(map(str, k)): _checksum(v) for k, v in role_covs.items()}
    if not rows:
        return ObservationDataset(np.zeros((0, width)), np.zeros((0, width), dtype=np.uint8), np.zeros((0, 2), dtype=np.int64))
    return ObservationDataset(
        np.vstack(rows), np.vstack(targets).astype(np.uint8), np.vstack(ids).astype(np.int64)
    )


# ---- cluster study ----


@dataclass
class ClusterStudy:
    observations: np.ndarray  # (N, |C|) concept-block draws
    labels: np.ndarray  # (N,) index of the concept the individual was drawn for
    covariances: list[np.ndarray]


def cluster_observations(co: CompiledOntology, k: int, scheme: str, rng: np.random.Generator) -> ClusterStudy:
    """One individual per concept (sampled with that concept forced on), k observations each."""
    vm = co.varmap
    concept_idx = [vm.parts.index(AtomicPart(c)) for c in co.concepts]
    theta = Parameterization.uniform(vm.total)
    obs, labels, covs = [], [], []
    for n, c in enumerate(co.concepts):
        var = vm.part_var(AtomicPart(c), 1)
        e = sample(co.smoothed, theta, evidence={var: 1}, rng=rng)[0][vm.side_block(1)]
        mean = e[concept_idx].astype(np.float64)
        cov = sample_covariance(scheme, len(concept_idx), mean, rng)
        covs.append(cov)
        obs.append(_gaussian(mean, cov, k, rng))
        labels.append(np.full(k, n, dtype=np.int64))
    return ClusterStudy(np.vstack(obs), np.concatenate(labels), covs)


# ---- CNF growth statistics ----


def cnf_grid_stats(
    concept_counts: Sequence[int],
    role_counts: Sequence[int],
    seeds: Sequence[int],
    p_domain: float = 0.5,
    p_range: float = 0.5,
    p_disjoint: float = 1.0,
) -> list[dict[str, Any]]:
    """Size of the initial-domino CNF for generated ontologies over a grid."""
    rows = []
    for nc, nr, seed in itertools.product(concept_counts, role_counts, seeds):
        onto = normalize(generate_ontology(GenConfig(nc, nr, p_domain, p_range, p_disjoint, seed)))
        parts = extract_parts(onto)
        cnf = build_d0_cnf(onto, parts, build_varmap(onto, parts))
        rows.append({"n_concepts": nc, "n_roles": nr, "seed": seed, "parts": len(parts), **cnf.stats()})
    return rows


# ---- files ----


def _bitstring(bits: np.ndarray) -> str:
    return "".join(str(int(b)) for b in bits)


def write_ontology(onto: Ontology, path: Path) -> None:
    path.write_text(serialize_ontology(onto), encoding="utf-8")


def write_kg(kg: SyntheticKG, co: CompiledOntology, path: Path) -> None:
    """TSV: i, j, role bits, full domino bits."""
    roles = co.varmap.role_block()
    with open(path, "w", encoding="utf-8") as f:
        f.write("i\tj\troles\tdomino\n")
        for (i, j), a in zip(kg.pairs, kg.assertions):
            f.write(f"{i}\t{j}\t{_bitstring(a[roles])}\t{_bitstring(a)}\n")


def read_kg(path: Path, individuals: np.ndarray, co: CompiledOntology) -> SyntheticKG:
    pairs, rows = [], []
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header != ["i", "j", "roles", "domino"]:
            raise SchemaError(f"{path}: unexpected KG header {header}")
        for lineno, line in enumerate(f, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 4 or len(fields[3]) != co.varmap.total or set(fields[3]) - {"0", "1"}:
                raise SchemaError(f"{path}:{lineno}: expected i, j, roles and a {co.varmap.total}-bit domino")
            try:
                pairs.append((int(fields[0]), int(fields[1])))
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: individual ids must be integers") from None
            rows.append([int(b) for b in fields[3]])
    return SyntheticKG(individuals, pairs, np.array(rows, dtype=np.uint8).reshape(-1, co.varmap.total))


def write_dataset(ds: ObservationDataset, path: Path) -> None:
    n = ds.width
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x_{k}" for k in range(n)] + [f"y_{k}" for k in range(n)] + ["subj_id", "obj_id"])
        for x, y, (i, j) in zip(ds.rows, ds.targets, ds.pairs):
            w.writerow([repr(float(v)) for v in x] + [int(b) for b in y] + [int(i), int(j)])


def read_dataset(path: Path) -> ObservationDataset:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or len(header) < 2 or header[-2:] != ["subj_id", "obj_id"] or (len(header) - 2) % 2:
            raise SchemaError(f"{path}: not a dataset file")
        n = (len(header) - 2) // 2
        if header[:n] != [f"x_{k}" for k in range(n)] or header[n : 2 * n] != [f"y_{k}" for k in range(n)]:
            raise SchemaError(f"{path}: malformed dataset header")
        xs, ys, ids = [], [], []
        for row in reader:
            if len(row) != 2 * n + 2:
                raise SchemaError(f"{path}: row has {len(row)} fields, expected {2 * n + 2}")
            try:
                xs.append([float(v) for v in row[:n]])
                ys.append([int(v) for v in row[n : 2 * n]])
                ids.append([int(row[-2]), int(row[-1])])
            except ValueError as e:
                raise SchemaError(f"{path}:{reader.line_num}: {e}") from None
    return ObservationDataset(
        np.array(xs, dtype=np.float64).reshape(-1, n),
        np.array(ys, dtype=np.uint8).reshape(-1, n),
        np.array(ids, dtype=np.int64).reshape(-1, 2),
    )


def write_observations(study: ClusterStudy, concepts: Sequence[str], path: Path) -> None:
    """Raw cluster observations for external projection/plotting."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(list(concepts) + ["concept"])
        for x, label in zip(study.observations, study.labels):
            w.writerow([repr(float(v)) for v in x] + [concepts[label]])


def write_rows_csv(rows: list[dict[str, Any]], path: Path) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_generator_meta(path: Path, cfg: Optional[GenConfig] = None, **extra: Any) -> None:
    data = {"config": asdict(cfg) if cfg else None, **extra}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
