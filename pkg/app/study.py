"""
Monte Carlo study: replicate datasets x solvers, each tuned by CV and refit.

Per run it records the held-out metric, the selected s0, the timing split
and how every simulated covariate was classified.
"""
import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.config import Config
from app.family import get_family
from app.metrics import evaluate
from app.models import EmSettings, FamilyKind, PriorKind, SimConfig, SmoothSpec, SolverKind, SsPrior, TuneGrid
from app.reparam import build_frame, predict_frame
from app.selection import Category, select
from app.sim import ACTIVE, SimData, column_names, generate, generate_replicates
from app.tune import cv_path, default_grid, get_solver, refit_path

logger = logging.getLogger(__name__)


def _metric_name(family: FamilyKind) -> str:
    return "auc" if family == FamilyKind.BINOMIAL else "r2"


def _specs(p: int, num_bases: int) -> List[SmoothSpec]:
    return [SmoothSpec(variable_name=name, num_bases=num_bases) for name in column_names(p)]


def _columns(x: np.ndarray) -> Dict[str, np.ndarray]:
    return dict(zip(column_names(x.shape[1]), x.T))


def run_replicate(data: SimData, solver: SolverKind, grid: TuneGrid, replicate: int = 0,
                  num_bases: int = Config.DEFAULT_K, settings: Optional[EmSettings] = None,
                  n_jobs: int = Config.N_JOBS, threshold: float = Config.THRESHOLD) -> Dict:
    config = data.config
    family = get_family(config.family)
    specs = _specs(config.p, num_bases)
    train = _columns(data.x_train)

    started = time.perf_counter()
    cv = cv_path(train, data.y_train, specs, family, grid, solver, PriorKind.DE_MIXTURE, settings, n_jobs)
    cv_done = time.perf_counter()
    frame = build_frame(train, specs)
    state = refit_path(frame, data.y_train, family, grid, cv.selected_index, solver, PriorKind.DE_MIXTURE, settings)
    finished = time.perf_counter()

    eta = state.linear_predictor(predict_frame(frame, _columns(data.x_test)).design)
    report = evaluate(family, data.y_test, eta, state.phi)
    categories = [v.category for v in select(frame, state, threshold).variables]
    inactive = categories[ACTIVE:]
    row = {
        "replicate": replicate,
        "solver": SolverKind(solver).value,
        "family": config.family.value,
        "p": config.p,
        "selected_s0": cv.selected_s0,
        "metric": _metric_name(config.family),
        "value": getattr(report, _metric_name(config.family)),
        "cv_seconds": cv_done - started,
        "final_seconds": finished - cv_done,
        "total_seconds": finished - started,
        "inactive_null": sum(c == Category.NULL for c in inactive),
        "inactive_total": len(inactive),
    }
    for name, category in zip(column_names(config.p)[:ACTIVE], categories):
        row[f"{name}_category"] = category.value
    logger.info(f"[STUDY] replicate {replicate} {row['solver']}: {row['metric']}={row['value']:.4f} "
                f"s0={row['selected_s0']:.4g} total={row['total_seconds']:.1f}s")
    return row


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    grouped = runs.groupby(["solver", "family", "p", "metric"], sort=True)
    summary = grouped.agg(
        replicates=("value", "size"),
        mean=("value", "mean"),
        sd=("value", "std"),
        cv_seconds=("cv_seconds", "mean"),
        final_seconds=("final_seconds", "mean"),
        total_seconds=("total_seconds", "mean"),
        inactive_null=("inactive_null", "sum"),
        inactive_total=("inactive_total", "sum"),
    ).reset_index()
    with np.errstate(invalid="ignore", divide="ignore"):
        summary["inactive_null_rate"] = summary["inactive_null"] / summary["inactive_total"]
    return summary


def run_study(config: SimConfig, replicates: int = 10, solvers: Sequence[SolverKind] = (SolverKind.EM_CD, SolverKind.EM_IWLS),
              folds: int = Config.SIM_FOLDS, num_bases: int = Config.DEFAULT_K,
              settings: Optional[EmSettings] = None, n_jobs: int = Config.N_JOBS,
              threshold: float = Config.THRESHOLD) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Replicates run one after another; the folds inside each CV run concurrently."""
    grid = default_grid(config.family, folds=folds, seed=config.seed)
    rows = []
    for r, data in enumerate(generate_replicates(config, replicates)):
        for solver in solvers:
            rows.append(run_replicate(data, solver, grid, r, num_bases, settings, n_jobs, threshold))
    runs = pd.DataFrame(rows)
    return runs, summarize(runs)


def single_fit_timing(config: SimConfig, s0: float, solver: SolverKind, num_bases: int = Config.DEFAULT_K,
                      settings: Optional[EmSettings] = None) -> float:
    """Wall time of one fit at a fixed s0 on the training part of a simulated dataset."""
    data = generate(config)
    family = get_family(config.family)
    specs = _specs(config.p, num_bases)
    frame = build_frame(_columns(data.x_train), specs)
    started = time.perf_counter()
    get_solver(solver)(frame, data.y_train, family, SsPrior(s0=s0), settings)
    return time.perf_counter() - started
