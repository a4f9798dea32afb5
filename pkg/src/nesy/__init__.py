# Neuro-symbolic classifiers: autodiff tape, MLP, Semantic Loss and the Semantic Probabilistic Layer.
from src.nesy.checkpoint import load_checkpoint, save_checkpoint
from src.nesy.metrics import Metrics, aggregate, compute_metrics, evaluate_model, write_report
from src.nesy.model import (
    MODES,
    NesyModel,
    build_model,
    factorized_predict,
    factorized_predict_bg,
    model_loss,
    predict,
    semantic_loss,
    spl_forward,
    spl_predict,
)
from src.nesy.train import TrainConfig, TrainResult, train, train_sl, train_spl

__all__ = [
    "MODES", "Metrics", "NesyModel", "TrainConfig", "TrainResult",
    "aggregate", "build_model", "compute_metrics", "evaluate_model", "factorized_predict",
    "factorized_predict_bg", "load_checkpoint", "model_loss", "predict", "save_checkpoint",
    "semantic_loss", "spl_forward", "spl_predict", "train", "train_sl", "train_spl", "write_report",
]
