"""
Classifier heads over the label space: factorized sigmoid outputs (optionally with
a Semantic Loss term) and the Semantic Probabilistic Layer, whose gating head sets
the sum weights of the label circuit. With background knowledge the subject and
object blocks are given as evidence and only the role block is predicted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from src import config
from src.errors import SchemaError
from src.infer import map_rows
from src.nesy.mlp import Linear, Mlp
from src.nesy.tape import (
    Tensor,
    bce_with_logits,
    circuit_log_mass,
    log_softmax_groups,
    scatter_columns,
)
from src.sdd import Circuit, EvalPlan

if TYPE_CHECKING:
    from src.pipeline import CompiledOntology

logger = logging.getLogger(__name__)

MODES = ("baseline", "sl", "spl")


@dataclass(eq=False)
class NesyModel:
    mode: str
    mlp: Mlp
    head: Linear
    compiled: CompiledOntology
    lam: float = 0.0
    bg: bool = False
    seed: int = 0

    @property
    def plan(self) -> EvalPlan:
        return self.compiled.label_circuit.plan

    @property
    def role_columns(self) -> np.ndarray:
        _, r, _ = self.compiled.label_blocks()
        return np.arange(r.start, r.stop)

    @property
    def evidence_columns(self) -> np.ndarray:
        s, _, o = self.compiled.label_blocks()
        return np.concatenate([np.arange(s.start, s.stop), np.arange(o.start, o.stop)])

    def parameters(self) -> list[Tensor]:
        return self.mlp.parameters() + self.head.parameters()

    def head_logits(self, x: np.ndarray) -> Tensor:
        return self.head(self.mlp(x))


def group_starts(plan: EvalPlan) -> np.ndarray:
    return np.array([start for start, _ in plan.groups], dtype=np.int64)


def build_model(
    co: CompiledOntology,
    n_in: int,
    mode: str = "baseline",
    lam: float = 0.0,
    bg: bool = False,
    hidden: Optional[Sequence[int]] = None,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> NesyModel:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if lam < 0:
        raise ValueError("the semantic loss weight must be nonnegative")
    if n_in != co.label_width:
        raise SchemaError(f"dataset width {n_in} does not match the label width {co.label_width}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    mlp = Mlp(n_in, hidden if hidden is not None else config.DEFAULTS["hidden"], rng)
    if mode == "spl":
        width = co.label_circuit.plan.n_elements
        if width == 0:
            raise ValueError("the label circuit has no decisions to gate")
    else:
        width = co.label_width
    return NesyModel(mode, mlp, Linear(mlp.n_features, width, rng), co, lam, bg, seed)


def _check_rows(model: NesyModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.compiled.label_width:
        raise SchemaError(f"expected rows of width {model.compiled.label_width}, got shape {x.shape}")
    return x


def _indicator_logs(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log factors of Indicator inputs; -1 entries are Marginalized (factor 1 both ways)."""
    y = np.asarray(y)
    pos = np.where(y == 0, -np.inf, 0.0)
    neg = np.where(y == 1, -np.inf, 0.0)
    return pos, neg


def _evidence_only(model: NesyModel, y: np.ndarray) -> np.ndarray:
    ev = np.full(np.shape(y), -1, dtype=np.int8)
    cols = model.evidence_columns
    ev[:, cols] = np.asarray(y)[:, cols]
    return ev


# ---- factorized heads ----


def factorized_predict(model: NesyModel, x: np.ndarray) -> np.ndarray:
    """Per-bit probabilities σ(w·z)."""
    return model.head_logits(_check_rows(model, x)).sigmoid().value


def factorized_predict_bg(model: NesyModel, x: np.ndarray, evidence_s: np.ndarray, evidence_o: np.ndarray) -> np.ndarray:
    """Subject/object blocks are the evidence; only role probabilities come from the network."""
    probs = factorized_predict(model, x)
    s, _, o = model.compiled.label_blocks()
    evidence_s, evidence_o = np.asarray(evidence_s), np.asarray(evidence_o)
    if evidence_s.shape != probs[:, s].shape or evidence_o.shape != probs[:, o].shape:
        raise ValueError("evidence blocks do not match the subject/object widths")
    probs[:, s] = evidence_s
    probs[:, o] = evidence_o
    return probs


def _sl_term(plan: EvalPlan, pos: Tensor, neg: Tensor, clamp: float) -> Tensor:
    log_mass = circuit_log_mass(plan, pos, neg)
    return -(log_mass.clamp_min(float(np.log(clamp))).mean())


def semantic_loss(label_circuit: Circuit, probs: np.ndarray, clamp: Optional[float] = None) -> float:
    """−log of the probability mass independent Bernoulli(probs) bits put on models; averaged over rows."""
    clamp = clamp if clamp is not None else config.DEFAULTS["sl_clamp"]
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if p.shape[1] != label_circuit.plan.n_vars:
        raise ValueError(f"expected {label_circuit.plan.n_vars} probabilities per row, got {p.shape[1]}")
    with np.errstate(divide="ignore"):
        pos, neg = np.log(p), np.log1p(-p)
    return float(_sl_term(label_circuit.plan, Tensor(pos), Tensor(neg), clamp).value)


def _factorized_loss(model: NesyModel, x: np.ndarray, y: np.ndarray, clamp: float) -> Tensor:
    logits = model.head_logits(x)
    if model.bg:
        roles = model.role_columns
        role_logits = logits.columns(roles)
        loss = bce_with_logits(role_logits, y[:, roles])
    else:
        loss = bce_with_logits(logits, y)
    if model.mode != "sl" or model.lam == 0:
        return loss
    if model.bg:
        base_pos, base_neg = _indicator_logs(_evidence_only(model, y))
        pos = scatter_columns(base_pos, roles, role_logits.log_sigmoid())
        neg = scatter_columns(base_neg, roles, (-role_logits).log_sigmoid())
    else:
        pos, neg = logits.log_sigmoid(), (-logits).log_sigmoid()
    return loss + _sl_term(model.plan, pos, neg, clamp) * model.lam


# ---- semantic probabilistic layer ----


def gated_log_weights(model: NesyModel, x: np.ndarray) -> Tensor:
    """Per-row log sum weights: one affine map to all element logits, softmax within each decision."""
    return log_softmax_groups(model.head_logits(x), group_starts(model.plan))


def _spl_log_prob(model: NesyModel, x: np.ndarray, y: np.ndarray) -> Tensor:
    lw = gated_log_weights(model, x)
    pos, neg = _indicator_logs(y)
    num = circuit_log_mass(model.plan, pos, neg, lw)
    if model.bg:
        zpos, zneg = _indicator_logs(_evidence_only(model, y))
    else:
        zpos = zneg = np.zeros_like(pos)
    den = circuit_log_mass(model.plan, zpos, zneg, lw)
    return num - den


def spl_forward(model: NesyModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """p(y | x) per row; 0 when y is not a model of the label circuit."""
    x = _check_rows(model, x)
    y = np.atleast_2d(np.asarray(y))
    with np.errstate(invalid="ignore"):
        logp = _spl_log_prob(model, x, y).value
    return np.where(np.isfinite(logp), np.exp(logp), 0.0)


def spl_predict(model: NesyModel, x: np.ndarray, evidence: Optional[np.ndarray] = None) -> np.ndarray:
    """MAP label vector per row under the gated weights; evidence rows use -1 for unset bits."""
    x = _check_rows(model, x)
    lw = gated_log_weights(model, x).value
    if evidence is None:
        pos = neg = np.zeros((len(x), model.plan.n_vars))
    else:
        pos, neg = _indicator_logs(evidence)
    return map_rows(model.plan, pos, neg, lw)


# ---- shared entry points ----


def model_loss(model: NesyModel, x: np.ndarray, y: np.ndarray, clamp: Optional[float] = None) -> Tensor:
    clamp = clamp if clamp is not None else config.DEFAULTS["sl_clamp"]
    x = _check_rows(model, x)
    y = np.asarray(y)
    if model.mode == "spl":
        return -(_spl_log_prob(model, x, y).mean())
    return _factorized_loss(model, x, y, clamp)


def predict(model: NesyModel, x: np.ndarray, y: Optional[np.ndarray] = None, threshold: Optional[float] = None) -> np.ndarray:
    """
    Label predictions. With background knowledge `y` supplies the subject/object
    evidence and must be given.
    """
    threshold = threshold if threshold is not None else config.DEFAULTS["threshold"]
    if model.bg and y is None:
        raise ValueError("background-knowledge models need the evidence rows")
    if model.mode == "spl":
        return spl_predict(model, x, _evidence_only(model, y) if model.bg else None)
    if model.bg:
        s, _, o = model.compiled.label_blocks()
        probs = factorized_predict_bg(model, x, y[:, s], y[:, o])
    else:
        probs = factorized_predict(model, x)
    return (probs >= threshold).astype(np.uint8)
