"""Multilabel metrics and the per-seed report."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np

from src.errors import SchemaError
from src.infer import evaluate_batch
from src.nesy.model import NesyModel, predict

if TYPE_CHECKING:
    from src.datagen import ObservationDataset

logger = logging.getLogger(__name__)

FIELDS = ("precision", "recall", "f1", "exact_match", "consistent")


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    exact_match: float
    consistent: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def compute_metrics(pred: np.ndarray, gold: np.ndarray, consistent: np.ndarray) -> Metrics:
    """Micro-averaged over bits; undefined precision/recall count as 0."""
    pred = np.asarray(pred).astype(bool)
    gold = np.asarray(gold).astype(bool)
    tp = int(np.sum(pred & gold))
    fp = int(np.sum(pred & ~gold))
    fn = int(np.sum(~pred & gold))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    n = len(pred)
    exact = float(np.mean(np.all(pred == gold, axis=1))) if n else 0.0
    cons = float(np.mean(consistent)) if n else 0.0
    return Metrics(precision, recall, f1, exact, cons)


def evaluate_model(
    model: NesyModel, ds: ObservationDataset, threshold: Optional[float] = None, threads: int = 1
) -> Metrics:
    """
    Thresholded (or MAP, for SPL) predictions against the targets. With background
    knowledge the scores cover the role block only; consistency always uses the full vector.
    """
    if ds.width != model.compiled.label_width:
        raise SchemaError(f"dataset width {ds.width} does not match the label width {model.compiled.label_width}")
    pred = predict(model, ds.rows, ds.targets, threshold) if model.bg else predict(model, ds.rows, threshold=threshold)
    ok = evaluate_batch(model.compiled.label_circuit, pred, threads=threads)
    if model.bg:
        cols = model.role_columns
        return compute_metrics(pred[:, cols], ds.targets[:, cols], ok)
    return compute_metrics(pred, ds.targets, ok)


def aggregate(runs: Sequence[Metrics]) -> dict[str, dict[str, float]]:
    out = {}
    for name in FIELDS:
        values = np.array([getattr(m, name) for m in runs], dtype=np.float64)
        out[name] = {"mean": float(values.mean()) if len(values) else 0.0, "std": float(values.std()) if len(values) else 0.0}
    return out


def write_report(path: Path, runs: Sequence[Metrics], seeds: Sequence[int], extra: Optional[dict[str, Any]] = None) -> dict[str, Any]:
    report = {
        **(extra or {}),
        "seeds": list(seeds),
        "per_seed": [m.as_dict() for m in runs],
        "summary": aggregate(runs),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    logger.info("Wrote metrics for %d run(s) to %s", len(runs), path)
    return report


def format_cell(summary: dict[str, dict[str, float]], name: str) -> str:
    return f"{summary[name]['mean']:.3f} ± {summary[name]['std']:.3f}"
