"""
Model checkpoints: one line of JSON (architecture, mode, lambda, seed) followed by
the parameters as a flat little-endian float64 block.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from src import __version__
from src.errors import SchemaError
from src.nesy.mlp import flatten_parameters, load_parameters
from src.nesy.model import NesyModel, build_model

if TYPE_CHECKING:
    from src.pipeline import CompiledOntology

logger = logging.getLogger(__name__)

FORMAT = "dl-circuits-checkpoint"


def save_checkpoint(model: NesyModel, path: Path) -> None:
    params = model.parameters()
    flat = flatten_parameters(params)
    header = {
        "format": FORMAT,
        "version": __version__,
        "mode": model.mode,
        "lambda": model.lam,
        "bg": model.bg,
        "seed": model.seed,
        "n_in": model.mlp.sizes[0],
        "hidden": model.mlp.sizes[1:],
        "head_width": int(model.head.weight.shape[1]),
        "parameters": int(flat.size),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(flat.astype("<f8").tobytes())
    logger.info("Saved %s checkpoint (%d parameters) to %s", model.mode, flat.size, path)


def load_checkpoint(path: Path, co: CompiledOntology) -> NesyModel:
    with open(path, "rb") as f:
        line = f.readline()
        blob = f.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"{path}: unreadable checkpoint header ({e})") from None
    if header.get("format") != FORMAT:
        raise SchemaError(f"{path}: not a checkpoint file")
    missing = [k for k in ("mode", "lambda", "bg", "seed", "n_in", "hidden", "head_width", "parameters") if k not in header]
    if missing:
        raise SchemaError(f"{path}: checkpoint header lacks {', '.join(missing)}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if flat.size != header["parameters"]:
        raise SchemaError(f"{path}: expected {header['parameters']} parameters, found {flat.size}")
    model = build_model(
        co, header["n_in"], header["mode"], header["lambda"], header["bg"], header["hidden"], header["seed"]
    )
    if int(model.head.weight.shape[1]) != header["head_width"]:
        raise SchemaError(f"{path}: head width does not match the bundle's label circuit")
    load_parameters(model.parameters(), flat)
    return model
