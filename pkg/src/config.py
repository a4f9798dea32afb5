"""
Load/save user settings. Stored under ~/.config/dl-circuits/.
Command-line flags override these; DLC_NODE_CAP overrides the node cap.
"""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(os.environ.get("XDG_CONFIG_HOME", os.path.expanduser("~/.config"))) / "dl-circuits"
CONFIG_FILE = CONFIG_DIR / "settings.json"

NODE_CAP_ENV = "DLC_NODE_CAP"

DEFAULTS: dict[str, Any] = {
    "node_cap": 5_000_000,  # compilation aborts beyond this many unique nodes
    "vtree": "balanced",  # "balanced" | "right-linear"
    "split_inverses": False,  # separate variables for R and inv(R)
    "batch_size": 4_096,  # rows per evaluation chunk
    "threads": 1,  # parallel-map width for reasoning/eval
    "sl_clamp": 1e-12,  # floor on consistent mass before taking the log
    "threshold": 0.5,  # per-bit decision threshold for baseline/SL predictions
    "minibatch": 64,
    "epochs": 30,
    "learning_rate": 0.001,
    "hidden": [128, 128],  # MLP hidden layer widths
    "covariance_retries": 8,  # non-PD draws tolerated before giving up
}


def _ensure_config_dir() -> None:
    CONFIG_DIR.mkdir(parents=True, exist_ok=True)


def load() -> dict[str, Any]:
    """Load settings from disk; merge with defaults, then apply the environment override."""
    out = dict(DEFAULTS)
    if CONFIG_FILE.exists():
        try:
            with open(CONFIG_FILE, "r", encoding="utf-8") as f:
                data = json.load(f)
            for k, v in data.items():
                if k in out:
                    out[k] = v
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("Failed to load config: %s", e)
    else:
        logger.debug("No config file at %s, using defaults", CONFIG_FILE)
    env_cap = os.environ.get(NODE_CAP_ENV)
    if env_cap:
        try:
            out["node_cap"] = int(env_cap)
        except ValueError:
            logger.warning("Ignoring %s=%r (not an integer)", NODE_CAP_ENV, env_cap)
    return out


def save(settings: dict[str, Any]) -> None:
    """Persist settings to disk."""
    _ensure_config_dir()
    try:
        with open(CONFIG_FILE, "w", encoding="utf-8") as f:
            json.dump(settings, f, indent=2)
    except OSError as e:
        logger.warning("Failed to save config: %s", e)


def reset_to_defaults() -> None:
    """Overwrite config with defaults."""
    save(DEFAULTS)
    logger.info("Settings reset to defaults")
