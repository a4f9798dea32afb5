"""
Training loops: Adam over shuffled minibatches, seed-deterministic and single-threaded.
Also the multiclass classifier used by the per-concept cluster study.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np

from src import config
from src.errors import DivergenceError, SchemaError
from src.nesy.mlp import Adam, Linear, Mlp
from src.nesy.model import NesyModel, build_model, model_loss
from src.nesy.tape import cross_entropy

if TYPE_CHECKING:
    from src.datagen import ObservationDataset
    from src.pipeline import CompiledOntology

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    minibatch: int = 64
    learning_rate: float = 0.001
    hidden: tuple[int, ...] = (128, 128)
    seed: int = 0
    sl_clamp: float = 1e-12

    @classmethod
    def from_settings(cls, settings: dict[str, Any], **overrides: Any) -> TrainConfig:
        values = {
            "epochs": settings["epochs"],
            "minibatch": settings["minibatch"],
            "learning_rate": settings["learning_rate"],
            "hidden": tuple(settings["hidden"]),
            "sl_clamp": settings["sl_clamp"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TrainResult:
    model: NesyModel
    epoch_losses: list[float] = field(default_factory=list)


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + size] for i in range(0, n, size)]


def train(
    co: CompiledOntology,
    ds: ObservationDataset,
    mode: str = "baseline",
    lam: float = 0.0,
    bg: bool = False,
    cfg: Optional[TrainConfig] = None,
) -> TrainResult:
    cfg = cfg or TrainConfig()
    if ds.width != co.label_width:
        raise SchemaError(f"dataset width {ds.width} does not match the bundle's label width {co.label_width}")
    rng = np.random.default_rng(cfg.seed)
    model = build_model(co, ds.width, mode, lam, bg, cfg.hidden, cfg.seed, rng)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    losses: list[float] = []
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for idx in _batches(len(ds), cfg.minibatch, rng):
            opt.zero_grad()
            loss = model_loss(model, ds.rows[idx], ds.targets[idx], cfg.sl_clamp)
            value = float(loss.value)
            if not math.isfinite(value):
                raise DivergenceError(f"{mode} loss became {value} in epoch {epoch}")
            loss.backward()
            opt.step()
            total += value * len(idx)
            logger.debug("epoch %d batch of %d: loss %.6f", epoch, len(idx), value)
        mean = total / max(len(ds), 1)
        losses.append(mean)
        logger.info("Epoch %d/%d (%s%s): loss %.6f", epoch, cfg.epochs, mode, "+bg" if bg else "", mean)
    return TrainResult(model, losses)


def train_sl(ds: ObservationDataset, co: CompiledOntology, lam: float, cfg: Optional[TrainConfig] = None, bg: bool = False) -> TrainResult:
    """Cross-entropy plus lam times the Semantic Loss; lam = 0 is the plain classifier."""
    return train(co, ds, "sl", lam, bg, cfg)


def train_spl(ds: ObservationDataset, co: CompiledOntology, cfg: Optional[TrainConfig] = None, bg: bool = False) -> TrainResult:
    return train(co, ds, "spl", 0.0, bg, cfg)


# ---- multiclass classifier for the cluster study ----


@dataclass(eq=False)
class Classifier:
    mlp: Mlp
    head: Linear

    def logits(self, x: np.ndarray):
        return self.head(self.mlp(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(np.asarray(x, dtype=np.float64)).value, axis=1)


def train_classifier(
    x: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    hidden: Sequence[int] = (128, 128, 128),
    cfg: Optional[TrainConfig] = None,
) -> Classifier:
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    x = np.asarray(x, dtype=np.float64)
    mlp = Mlp(x.shape[1], hidden, rng)
    clf = Classifier(mlp, Linear(mlp.n_features, n_classes, rng))
    opt = Adam(mlp.parameters() + clf.head.parameters(), lr=cfg.learning_rate)
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for idx in _batches(len(x), cfg.minibatch, rng):
            opt.zero_grad()
            loss = cross_entropy(clf.logits(x[idx]), labels[idx])
            if not math.isfinite(float(loss.value)):
                raise DivergenceError(f"classifier loss diverged in epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.value) * len(idx)
        logger.debug("Classifier epoch %d: loss %.6f", epoch, total / max(len(x), 1))
    return clf


def most_frequent_accuracy(train_labels: np.ndarray, test_labels: np.ndarray) -> float:
    if not len(test_labels):
        return 0.0
    majority = np.bincount(train_labels).argmax()
    return float(np.mean(test_labels == majority))
