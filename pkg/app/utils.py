import json
import logging
import os
import re
from typing import Any, Dict, List

import pandas as pd

from app.config import Config

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def save_to_json(data: Dict[str, Any], filename: str, output_dir: str = Config.OUTPUT_DIR) -> str:
    """Save data to JSON file"""
    os.makedirs(output_dir, exist_ok=True)
    filepath = os.path.join(output_dir, filename)

    with open(filepath, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)

    logger.info(f"[SAVE] {filepath}")
    return filepath


def save_csv(frame: pd.DataFrame, filename: str, output_dir: str = Config.OUTPUT_DIR) -> str:
    """Save a table with a header row and full-precision floats"""
    filepath = os.path.join(output_dir, filename)
    os.makedirs(os.path.dirname(filepath), exist_ok=True)
    frame.to_csv(filepath, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"[SAVE] {filepath}")
    return filepath


def curve_filename(variable: str) -> str:
    """curves/<variable>.csv with characters unsafe in file names replaced"""
    clean = re.sub(r"[^A-Za-z0-9._-]", "_", variable)
    return os.path.join("curves", f"{clean}.csv")


class OutputWriter:
    """Writes a command's outputs and remembers them so a failed command can remove them."""

    def __init__(self, output_dir: str = Config.OUTPUT_DIR):
        self.output_dir = output_dir
        self.written: List[str] = []
        self.created_dirs: List[str] = []

    def json(self, data: Dict[str, Any], filename: str) -> str:
        self._prepare(filename)
        return self._track(save_to_json(data, filename, self.output_dir))

    def csv(self, frame: pd.DataFrame, filename: str) -> str:
        self._prepare(filename)
        return self._track(save_csv(frame, filename, self.output_dir))

    def text(self, content: str, filename: str) -> str:
        filepath = self._prepare(filename)
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(content)
        logger.info(f"[SAVE] {filepath}")
        return self._track(filepath)

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def _prepare(self, filename: str) -> str:
        """Create the missing parent directories of filename, recording each one."""
        filepath = self.path(filename)
        missing = []
        parent = os.path.dirname(filepath) or "."
        while not os.path.isdir(parent):
            missing.append(parent)
            parent = os.path.dirname(parent) or "."
        for directory in reversed(missing):
            os.mkdir(directory)
            self.created_dirs.append(directory)
        return filepath

    def _track(self, filepath: str) -> str:
        self.written.append(filepath)
        return filepath

    def rollback(self):
        for filepath in reversed(self.written):
            if os.path.exists(filepath):
                os.remove(filepath)
        self.written = []
        # only directories this writer made, deepest first
        for directory in reversed(self.created_dirs):
            if os.path.isdir(directory) and not os.listdir(directory):
                os.rmdir(directory)
        self.created_dirs = []
        logger.warning(f"[ROLLBACK] removed partial outputs in {self.output_dir}")
