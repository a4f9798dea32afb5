#!/usr/bin/env python3
"""
dl-circuits: entry point. Run with: python main.py <command> ... (see --help).
Use --reset-settings to restore the stored defaults.
"""
from __future__ import annotations

import logging
import sys

from src.cli import main as cli_main
from src.config import reset_to_defaults

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%H:%M:%S",
)
logger = logging.getLogger(__name__)


def main() -> int:
    if "--reset-settings" in sys.argv:
        reset_to_defaults()
        print("Settings reset to defaults.")
        return 0
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
