import numpy as np
import pytest
from pydantic import ValidationError
from sklearn.model_selection import KFold

from app.em_cd import fit_em_cd
from app.errors import BadK, ConfigError, NumericalError, TooFewDistinctValues
from app.family import Binomial, Gaussian
from app.models import Criterion, EmSettings, PriorKind, SsPrior, TuneGrid
from app.reparam import build_frame
from app.tune import (
    cv_path,
    default_grid,
    kfold_split,
    path_order,
    refit_path,
    select_index,
    worst_score,
)
from conftest import columns_of, specs_for

gaussian = Gaussian()
binomial = Binomial()

SETTINGS = EmSettings(epsilon=1e-4, max_em_iter=100)


def _small_grid(criterion=Criterion.DEVIANCE, folds=3):
    return TuneGrid(s0_values=[0.02, 0.1, 0.4], s1=1.0, folds=folds, seed=7, criterion=criterion)


def test_default_grid():
    grid = default_grid("gaussian")
    values = np.asarray(grid.s0_values)

    assert values.size == 20
    assert values[0] == pytest.approx(0.001)
    assert values[-1] == pytest.approx(0.5)
    ratios = values[1:] / values[:-1]
    assert float(np.max(np.abs(ratios - ratios[0]))) < 1e-12
    assert np.all(values < grid.s1)
    assert grid.s1 == 1.0


def test_kfold_split_sizes():
    assert np.bincount(kfold_split(10, 5, seed=3)).tolist() == [2, 2, 2, 2, 2]
    assert sorted(np.bincount(kfold_split(7, 5, seed=3)).tolist()) == [1, 1, 1, 2, 2]
    assert np.array_equal(kfold_split(50, 4, seed=9), kfold_split(50, 4, seed=9))
    assert not np.array_equal(kfold_split(50, 4, seed=9), kfold_split(50, 4, seed=10))


def test_kfold_split_rejects_bad_k():
    with pytest.raises(BadK):
        kfold_split(10, 1, seed=0)
    with pytest.raises(BadK):
        kfold_split(3, 5, seed=0)


def test_kfold_split_labels_the_shuffled_kfold_test_rows():
    folds = kfold_split(23, 4, seed=5)
    for fold, (_, test) in enumerate(KFold(n_splits=4, shuffle=True, random_state=5).split(np.arange(23))):
        assert np.array_equal(np.flatnonzero(folds == fold), np.sort(test))


def test_grid_rejects_a_negative_seed():
    with pytest.raises(ValidationError):
        TuneGrid(s0_values=[0.1], seed=-1)


def test_select_index_and_worst_scores():
    assert select_index(np.array([3.0, 1.0, 2.0]), Criterion.DEVIANCE) == 1
    assert select_index(np.array([0.7, 0.9, 0.8]), Criterion.AUC) == 1
    # exact ties go to the larger s0
    assert select_index(np.array([1.0, 1.0, 2.0]), Criterion.MSE) == 1
    assert select_index(np.array([0.9, 0.9, 0.5]), Criterion.AUC) == 1
    assert worst_score(Criterion.AUC) == 0.0
    assert worst_score(Criterion.DEVIANCE) == float("inf")


def test_path_runs_from_the_smallest_s0():
    assert list(path_order(3)) == [0, 1, 2]


def test_cv_table_arithmetic(gaussian_data):
    data = columns_of(gaussian_data.x_train)
    cv = cv_path(data, gaussian_data.y_train, specs_for(4), gaussian, _small_grid(), settings=SETTINGS, n_jobs=3)

    assert cv.scores.shape == (3, 3)
    assert not cv.failed.any()
    assert np.array_equal(cv.mean, cv.scores.mean(axis=1))
    recomputed = np.array([np.std(row, ddof=1) / np.sqrt(3) for row in cv.scores])
    assert np.array_equal(cv.se, recomputed)
    assert cv.selected_s0 in cv.s0_values
    assert cv.mean[cv.selected_index] == cv.mean.min()
    assert cv.selection_rule == "min_mean"
    assert np.all(np.isfinite(cv.oof_eta))

    table = cv.to_frame()
    assert list(table.columns) == ["s0", "fold", "criterion", "mean", "se", "failed"]
    assert len(table) == 9
    assert sorted(table["fold"].unique().tolist()) == [1, 2, 3]
    for s0, rows in table.groupby("s0"):
        assert rows["criterion"].mean() == pytest.approx(rows["mean"].iloc[0], rel=1e-12)


def test_bases_are_rebuilt_per_fold(gaussian_data):
    data = columns_of(gaussian_data.x_train)
    cv = cv_path(data, gaussian_data.y_train, specs_for(4), gaussian, _small_grid(), settings=SETTINGS)

    first, second = cv.fold_knots[0]["x1"], cv.fold_knots[1]["x1"]
    assert not np.array_equal(first, second)


def test_results_do_not_depend_on_worker_count(gaussian_data):
    data = columns_of(gaussian_data.x_train)
    serial = cv_path(data, gaussian_data.y_train, specs_for(4), gaussian, _small_grid(), settings=SETTINGS, n_jobs=1)
    parallel = cv_path(data, gaussian_data.y_train, specs_for(4), gaussian, _small_grid(), settings=SETTINGS,
                       n_jobs=3)

    assert np.array_equal(serial.scores, parallel.scores)
    assert np.array_equal(serial.oof_eta, parallel.oof_eta)
    assert serial.selected_index == parallel.selected_index


def test_auc_criterion_is_maximized(binomial_data):
    data = columns_of(binomial_data.x_train)
    cv = cv_path(data, binomial_data.y_train, specs_for(4), binomial, _small_grid(Criterion.AUC), settings=SETTINGS)

    assert np.all((cv.scores >= 0) & (cv.scores <= 1))
    assert cv.mean[cv.selected_index] == cv.mean.max()


def test_failed_fold_is_recorded_not_raised(gaussian_data):
    calls = []

    def flaky_builder(data, specs):
        calls.append(1)
        if len(calls) == 1:
            raise TooFewDistinctValues("no spread")
        return build_frame(data, specs)

    data = columns_of(gaussian_data.x_train)
    cv = cv_path(data, gaussian_data.y_train, specs_for(4), gaussian, _small_grid(), settings=SETTINGS, n_jobs=1,
                 frame_builder=flaky_builder)

    assert cv.failed[:, 0].all()
    assert not cv.failed[:, 1:].any()
    assert np.all(np.isinf(cv.scores[:, 0]))
    assert cv.fold_knots[0] == {}


def test_every_cell_failing_raises(gaussian_data):
    def broken(data, specs):
        raise TooFewDistinctValues("no spread")

    with pytest.raises(NumericalError):
        cv_path(columns_of(gaussian_data.x_train), gaussian_data.y_train, specs_for(4), gaussian, _small_grid(),
                settings=SETTINGS, frame_builder=broken)


def test_solver_usage_errors_are_raised_not_recorded(gaussian_data):
    with pytest.raises(ConfigError):
        cv_path(columns_of(gaussian_data.x_train), gaussian_data.y_train, specs_for(4), gaussian, _small_grid(),
                prior_kind=PriorKind.NORMAL_MIXTURE, settings=SETTINGS, n_jobs=1)


def test_pure_noise_gives_intercept_only_fits(rng):
    x = rng.normal(size=(200, 4))
    y = rng.normal(size=200)
    grid = TuneGrid(s0_values=[0.002, 0.004, 0.5], s1=1.0, folds=3, seed=1)
    cv = cv_path(columns_of(x), y, specs_for(4), gaussian, grid, settings=SETTINGS)

    # both spike-dominated scales fit the intercept-only model in every fold
    assert cv.mean[0] == pytest.approx(cv.mean[1], rel=1e-9)

    frame = build_frame(columns_of(x), specs_for(4))
    state = refit_path(frame, y, gaussian, grid, 0, settings=SETTINGS)
    assert np.all(state.beta == 0.0)


def test_refit_path_matches_a_manual_warm_chain(gaussian_data, gaussian_frame):
    grid = _small_grid()
    state = refit_path(gaussian_frame, gaussian_data.y_train, gaussian, grid, 1, settings=SETTINGS)

    warm = fit_em_cd(gaussian_frame, gaussian_data.y_train, gaussian, SsPrior(s0=0.02, s1=1.0), SETTINGS)
    manual = fit_em_cd(gaussian_frame, gaussian_data.y_train, gaussian, SsPrior(s0=0.1, s1=1.0), SETTINGS,
                       warm_start=warm)
    assert np.array_equal(state.beta, manual.beta)
