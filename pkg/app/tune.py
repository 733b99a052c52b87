"""
Spike-scale path and k-fold cross-validation.

Each fold rebuilds its bases on the training rows only and fits the whole s0
path in ascending order, warm-starting every point from the previous one.
The final refit on all rows walks the same path to the selected s0.
Folds run concurrently; cells are aggregated once every fold has finished.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from app import metrics
from app.config import Config
from app.em_cd import fit_em_cd
from app.em_iwls import fit_em_iwls
from app.errors import BadK, BhamError, NumericalError, UsageError
from app.family import Family
from app.models import Criterion, EmSettings, FamilyKind, PriorKind, SmoothSpec, SolverKind, SsPrior, TuneGrid
from app.reparam import build_frame, predict_frame

logger = logging.getLogger(__name__)

SOLVERS: Dict[SolverKind, Callable] = {
    SolverKind.EM_CD: fit_em_cd,
    SolverKind.EM_IWLS: fit_em_iwls,
}


def get_solver(kind) -> Callable:
    return SOLVERS[SolverKind(kind)]


def _maximized(criterion: Criterion) -> bool:
    return criterion == Criterion.AUC


def worst_score(criterion: Criterion) -> float:
    return 0.0 if _maximized(criterion) else float("inf")


@dataclass
class CvResult:
    s0_values: np.ndarray
    criterion: Criterion
    scores: np.ndarray
    failed: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    selected_index: int
    folds: np.ndarray
    oof_eta: np.ndarray
    fold_knots: List[Dict[str, np.ndarray]] = field(default_factory=list)

    @property
    def selected_s0(self) -> float:
        return float(self.s0_values[self.selected_index])

    @property
    def selection_rule(self) -> str:
        return "min_mean"

    def to_frame(self) -> pd.DataFrame:
        """One row per (s0, fold): the fold's criterion value next to the path mean and SE."""
        rows = []
        for i, s0 in enumerate(self.s0_values):
            for f in range(self.scores.shape[1]):
                rows.append({
                    "s0": float(s0),
                    "fold": f + 1,
                    "criterion": float(self.scores[i, f]),
                    "mean": float(self.mean[i]),
                    "se": float(self.se[i]),
                    "failed": bool(self.failed[i, f]),
                })
        return pd.DataFrame(rows, columns=["s0", "fold", "criterion", "mean", "se", "failed"])


def default_grid(family=FamilyKind.GAUSSIAN, folds: int = Config.FOLDS, seed: int = Config.SEED,
                 criterion: Criterion = Criterion.DEVIANCE) -> TuneGrid:
    """Log-spaced s0 path below the slab scale. The same range serves both families."""
    FamilyKind(family)
    values = np.geomspace(Config.S0_MIN, Config.S0_MAX, Config.S0_COUNT)
    return TuneGrid(s0_values=values.tolist(), s1=Config.S1, folds=folds, seed=seed, criterion=criterion)


def kfold_split(n: int, k: int, seed: int) -> np.ndarray:
    """Fold label (0..k-1) per row; a seeded shuffle, fold sizes differ by at most one."""
    if k < 2 or n < k:
        raise BadK(f"need 2 <= k <= n, got k={k}, n={n}")
    folds = np.empty(n, dtype=int)
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    for fold, (_, test) in enumerate(splitter.split(np.arange(n))):
        folds[test] = fold
    return folds


def path_order(length: int) -> range:
    """Fitting order along an ascending s0 grid: the sparsest scale starts cold."""
    return range(length)


def refit_path(frame, y, family: Family, grid: TuneGrid, index: int, solver=SolverKind.EM_CD,
               prior_kind: PriorKind = PriorKind.DE_MIXTURE, settings: Optional[EmSettings] = None):
    """Fit on all rows along the path up to grid.s0_values[index]; returns the final state."""
    fit = get_solver(solver)
    warm = None
    for i in path_order(len(grid.s0_values)):
        if i > index:
            break
        prior = SsPrior(s0=grid.s0_values[i], s1=grid.s1, kind=prior_kind)
        try:
            warm = fit(frame, y, family, prior, settings, warm_start=warm)
        except UsageError:
            raise
        except BhamError as exc:
            if i == index:
                raise
            logger.warning(f"[REFIT] s0={grid.s0_values[i]:.4g} failed, continuing along the path: {exc}")
    return warm


def score(criterion: Criterion, family: Family, y, eta, phi: float) -> float:
    mu = family.linkinv(eta)
    if criterion == Criterion.AUC:
        return metrics.auc(y, mu)
    if criterion == Criterion.MSE:
        return metrics.mse(y, mu)
    return family.deviance(y, mu, phi)


def _subset(data: Mapping, rows: np.ndarray) -> Dict[str, np.ndarray]:
    return {name: np.asarray(data[name], dtype=float)[rows] for name in data}


def _run_fold(fold: int, folds: np.ndarray, data: Mapping, y: np.ndarray, specs: Sequence[SmoothSpec],
              family: Family, grid: TuneGrid, solver: Callable, prior_kind: PriorKind,
              settings: EmSettings, frame_builder: Callable):
    train = np.flatnonzero(folds != fold)
    test = np.flatnonzero(folds == fold)
    length = len(grid.s0_values)
    scores = np.full(length, worst_score(grid.criterion))
    failed = np.ones(length, dtype=bool)
    eta = np.full((length, test.size), np.nan)

    try:
        frame = frame_builder(_subset(data, train), specs)
        test_frame = predict_frame(frame, _subset(data, test))
    except BhamError as exc:
        logger.warning(f"[CV] fold {fold + 1}: bases could not be built ({exc}); every cell marked failed")
        return scores, failed, eta, {}

    knots = {block.variable_name: block.expansion.knots for block in frame.blocks}
    warm = None
    for i in path_order(length):
        s0 = grid.s0_values[i]
        prior = SsPrior(s0=s0, s1=grid.s1, kind=prior_kind)
        try:
            state = solver(frame, y[train], family, prior, settings, warm_start=warm)
            eta[i] = state.linear_predictor(test_frame.design)
            scores[i] = score(grid.criterion, family, y[test], eta[i], state.phi)
            failed[i] = False
            warm = state
        except UsageError:
            raise
        except BhamError as exc:
            logger.warning(f"[CV] fold {fold + 1} s0={s0:.4g} failed: {exc}")
    logger.info(f"[CV] fold {fold + 1}/{grid.folds} done ({int(failed.sum())} failed cells)")
    return scores, failed, eta, knots


def select_index(mean: np.ndarray, criterion: Criterion) -> int:
    """Best mean criterion; exact ties go to the larger s0."""
    best = np.max(mean) if _maximized(criterion) else np.min(mean)
    return int(np.flatnonzero(mean == best)[-1])


def cv_path(data: Mapping, y, specs: Sequence[SmoothSpec], family: Family, grid: TuneGrid,
            solver=SolverKind.EM_CD, prior_kind: PriorKind = PriorKind.DE_MIXTURE,
            settings: Optional[EmSettings] = None, n_jobs: int = Config.N_JOBS,
            frame_builder: Callable = build_frame) -> CvResult:
    settings = settings or EmSettings()
    fit = get_solver(solver)
    y = family.validate_response(y)
    n = y.size
    folds = kfold_split(n, grid.folds, grid.seed)
    length = len(grid.s0_values)
    logger.info(f"[CV] {grid.folds} folds x {length} s0 values, solver={SolverKind(solver).value}")

    with ThreadPoolExecutor(max_workers=max(1, n_jobs)) as executor:
        futures = [
            executor.submit(_run_fold, f, folds, data, y, specs, family, grid, fit, prior_kind, settings,
                            frame_builder)
            for f in range(grid.folds)
        ]
        results = [future.result() for future in futures]

    scores = np.column_stack([r[0] for r in results])
    failed = np.column_stack([r[1] for r in results])
    if failed.all():
        raise NumericalError("every cross-validation cell failed")

    oof_eta = np.full((length, n), np.nan)
    for f, result in enumerate(results):
        oof_eta[:, folds == f] = result[2]

    mean = scores.mean(axis=1)
    with np.errstate(invalid="ignore"):
        se = scores.std(axis=1, ddof=1) / np.sqrt(grid.folds)
    index = select_index(mean, grid.criterion)
    logger.info(f"[CV] selected s0={grid.s0_values[index]:.6g} ({grid.criterion.value} {mean[index]:.6g})")

    return CvResult(
        s0_values=np.asarray(grid.s0_values, dtype=float),
        criterion=grid.criterion,
        scores=scores,
        failed=failed,
        mean=mean,
        se=se,
        selected_index=index,
        folds=folds,
        oof_eta=oof_eta,
        fold_knots=[r[3] for r in results],
    )
