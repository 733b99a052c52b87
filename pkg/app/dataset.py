"""CSV ingestion and the smooth-spec file."""
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import Config
from app.errors import ConfigError, EmptyAfterFiltering, MissingVariable, ParseError
from app.models import SmoothSpec

logger = logging.getLogger(__name__)

# first data row is line 2 of the file
HEADER_LINES = 1


@dataclass
class Dataset:
    frame: pd.DataFrame
    outcome: str
    predictors: List[str]
    dropped_rows: int = 0
    path: Optional[str] = None

    @property
    def y(self) -> np.ndarray:
        return self.frame[self.outcome].to_numpy(dtype=float)

    @property
    def n(self) -> int:
        return len(self.frame)

    def columns(self) -> Dict[str, np.ndarray]:
        return {name: self.frame[name].to_numpy(dtype=float) for name in self.predictors}


def _numeric(raw: pd.Series, name: str) -> pd.Series:
    values = pd.to_numeric(raw.str.strip(), errors="coerce")
    filled = raw.notna() & (raw.str.strip() != "")
    bad = filled & ~np.isfinite(values.to_numpy(dtype=float))
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        line = position + HEADER_LINES + 1
        raise ParseError(f"row {line}, column '{name}': '{raw.iloc[position]}' is not a finite number",
                         row=line, column=name)
    return values


def ingest_csv(path: str, outcome: str, predictors: Optional[Sequence[str]] = None,
               require_outcome: bool = True) -> Dataset:
    """Read the outcome and predictor columns as floats; rows with a missing used value are dropped."""
    if not os.path.isfile(path):
        raise ConfigError(f"data file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc

    header = [str(c) for c in raw.columns]
    if require_outcome and outcome not in header:
        raise MissingVariable(f"outcome column '{outcome}' not in {path}")
    if predictors is None:
        predictors = [c for c in header if c != outcome]
    predictors = list(predictors)
    if not predictors:
        raise ConfigError(f"{path}: no predictor columns")
    missing = [c for c in predictors if c not in header]
    if missing:
        raise MissingVariable(f"columns {missing} not in {path}")

    used = ([outcome] if outcome in header else []) + [c for c in predictors if c != outcome]
    parsed = pd.DataFrame({name: _numeric(raw[name], name) for name in used})
    complete = parsed.notna().all(axis=1) & np.isfinite(parsed.to_numpy(dtype=float)).all(axis=1)
    dropped = int((~complete).sum())
    if dropped:
        logger.warning(f"[WARN] {path}: dropped {dropped} rows with missing values")
    parsed = parsed[complete].reset_index(drop=True)
    if parsed.empty:
        raise EmptyAfterFiltering(f"{path}: no complete rows left")

    logger.info(f"[DATA] {path}: {len(parsed)} rows, {len(predictors)} predictors")
    return Dataset(frame=parsed, outcome=outcome, predictors=predictors, dropped_rows=dropped, path=path)


def read_spec_file(path: str) -> Dict[str, SmoothSpec]:
    """JSON object mapping column name to {kind, num_bases, knot_rule}."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            content = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"smooth spec file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}", row=exc.lineno) from exc
    if not isinstance(content, dict):
        raise ConfigError(f"{path}: expected a JSON object keyed by column name")
    try:
        return {name: SmoothSpec(variable_name=name, **(settings or {})) for name, settings in content.items()}
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_specs(predictors: Sequence[str], overrides: Mapping[str, SmoothSpec],
                  default_k: int = Config.DEFAULT_K) -> List[SmoothSpec]:
    unknown = sorted(set(overrides) - set(predictors))
    if unknown:
        raise ConfigError(f"smooth specs given for unused columns: {unknown}")
    try:
        return [overrides.get(name) or SmoothSpec(variable_name=name, num_bases=default_k) for name in predictors]
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_smooth_specs(path: Optional[str], predictors: Sequence[str],
                      default_k: int = Config.DEFAULT_K) -> List[SmoothSpec]:
    overrides = read_spec_file(path) if path else {}
    return resolve_specs(predictors, overrides, default_k)
