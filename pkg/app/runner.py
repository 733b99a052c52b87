"""
Command orchestration: every CLI subcommand is one run_* function here.

Outputs go through an OutputWriter; if a command fails, the files it
already wrote are removed before the error propagates.
"""
import logging
import time
from contextlib import contextmanager
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from app.dataset import Dataset, ingest_csv, read_spec_file, resolve_specs
from app.errors import ConfigError
from app.family import Family, get_family
from app.metrics import MetricReport, evaluate
from app.models import Criterion, FamilyKind, PriorKind, RunConfig, SavedModel, SolverKind
from app.persistence import (
    dumps,
    frame_template,
    load_model,
    predict_saved,
    state_from_saved,
    to_saved_model,
)
from app.reparam import ModelFrame, build_frame, predict_frame
from app.selection import Category, curve_grid, select
from app.sim import generate
from app.tune import cv_path, get_solver, refit_path
from app.utils import OutputWriter, curve_filename

logger = logging.getLogger(__name__)

MODEL_FILE = "model.bham"


@contextmanager
def outputs(output_dir: str):
    writer = OutputWriter(output_dir)
    try:
        yield writer
    except Exception:
        writer.rollback()
        raise


def _check(config: RunConfig):
    if config.criterion == Criterion.AUC and config.family != FamilyKind.BINOMIAL:
        raise ConfigError("the auc criterion needs --family binomial")
    if config.solver == SolverKind.EM_CD and config.prior_kind == PriorKind.NORMAL_MIXTURE:
        raise ConfigError("--prior normal_mixture needs --solver em_iwls")


def prepare(config: RunConfig) -> Tuple[Dataset, list, Family]:
    if not config.data_path:
        raise ConfigError(f"{config.command} needs --data")
    dataset = ingest_csv(config.data_path, config.outcome_column, config.predictors)
    overrides = dict(config.smooth_specs)
    if config.spec_path:
        overrides.update(read_spec_file(config.spec_path))
    specs = resolve_specs(dataset.predictors, overrides, config.default_k)
    family = get_family(config.family)
    family.validate_response(dataset.y)
    return dataset, specs, family


def _metrics(report: Optional[MetricReport]) -> Optional[Dict[str, Any]]:
    return None if report is None else report.model_dump(exclude_none=True)


def _test_metrics(config: RunConfig, dataset: Dataset, frame: ModelFrame, state, family) -> Optional[MetricReport]:
    if not config.test_data_path:
        return None
    test = ingest_csv(config.test_data_path, config.outcome_column, dataset.predictors)
    eta = state.linear_predictor(predict_frame(frame, test.columns()).design)
    return evaluate(family, test.y, eta, state.phi)


def _write_model_outputs(writer: OutputWriter, model: SavedModel, frame: ModelFrame, state,
                         threshold: float) -> Dict[str, str]:
    files = {"model": writer.text(dumps(model), MODEL_FILE)}
    selection = select(frame, state, threshold)
    files["selection"] = writer.csv(selection.to_frame(), "selection.csv")
    covariance = getattr(state, "covariance", None)
    for j, choice in enumerate(selection.variables):
        if choice.category == Category.NULL:
            continue
        curve = curve_grid(frame.blocks[j], frame.block_columns(j), state.beta, covariance)
        writer.csv(curve, curve_filename(choice.variable))
    return files


def run_fit(config: RunConfig) -> Dict[str, Any]:
    """Single fit at a fixed s0."""
    _check(config)
    if config.s0 is None:
        raise ConfigError("fit needs --s0; use tune to choose it by cross-validation")
    dataset, specs, family = prepare(config)
    prior = config.prior(config.s0)
    started = time.perf_counter()
    frame = build_frame(dataset.columns(), specs)
    state = get_solver(config.solver)(frame, dataset.y, family, prior, config.settings)
    seconds = time.perf_counter() - started

    with outputs(config.output_dir) as writer:
        model = to_saved_model(frame, state, family, prior, dataset.outcome)
        files = _write_model_outputs(writer, model, frame, state, config.threshold)
        report = {
            "dropped_rows": dataset.dropped_rows,
            "in_sample": _metrics(evaluate(family, dataset.y, state.linear_predictor(frame.design), state.phi)),
            "test": _metrics(_test_metrics(config, dataset, frame, state, family)),
        }
        files["metrics"] = writer.json(report, "metrics.json")
        writer.json({"cv_seconds": 0.0, "final_seconds": seconds, "total_seconds": seconds}, "timing.json")
    return {"model": model, "metrics": report, "files": files}


def run_tune_fit(config: RunConfig) -> Dict[str, Any]:
    """Cross-validate the s0 path, refit on all rows at the selected s0, write every report."""
    _check(config)
    dataset, specs, family = prepare(config)
    grid = config.grid()
    data = dataset.columns()

    started = time.perf_counter()
    cv = cv_path(data, dataset.y, specs, family, grid, config.solver, config.prior_kind, config.settings,
                 config.n_jobs)
    cv_done = time.perf_counter()
    prior = config.prior(cv.selected_s0)
    frame = build_frame(data, specs)
    state = refit_path(frame, dataset.y, family, grid, cv.selected_index, config.solver, config.prior_kind,
                       config.settings)
    finished = time.perf_counter()
    timing = {
        "cv_seconds": cv_done - started,
        "final_seconds": finished - cv_done,
        "total_seconds": finished - started,
    }
    logger.info(f"[TUNE] s0={cv.selected_s0:.6g} cv={timing['cv_seconds']:.2f}s final={timing['final_seconds']:.2f}s")

    oof_eta = cv.oof_eta[cv.selected_index]
    out_of_fold = None
    if np.all(np.isfinite(oof_eta)):
        out_of_fold = evaluate(family, dataset.y, oof_eta, state.phi)
    else:
        logger.warning("[WARN] out-of-fold metrics skipped: a fold failed at the selected s0")

    with outputs(config.output_dir) as writer:
        model = to_saved_model(frame, state, family, prior, dataset.outcome, selected_s0=cv.selected_s0)
        files = _write_model_outputs(writer, model, frame, state, config.threshold)
        files["cv_table"] = writer.csv(cv.to_frame(), "cv_table.csv")
        report = {
            "selected_s0": cv.selected_s0,
            "criterion": grid.criterion.value,
            "dropped_rows": dataset.dropped_rows,
            "in_sample": _metrics(evaluate(family, dataset.y, state.linear_predictor(frame.design), state.phi)),
            "out_of_fold": _metrics(out_of_fold),
            "test": _metrics(_test_metrics(config, dataset, frame, state, family)),
        }
        files["metrics"] = writer.json(report, "metrics.json")
        files["timing"] = writer.json(timing, "timing.json")
    return {"model": model, "metrics": report, "timing": timing, "cv": cv, "files": files}


def _load(config: RunConfig) -> SavedModel:
    if not config.model_path:
        raise ConfigError(f"{config.command} needs --model")
    return load_model(config.model_path)


def run_predict(config: RunConfig) -> Dict[str, Any]:
    model = _load(config)
    if not config.data_path:
        raise ConfigError("predict needs --data")
    predictors = [block.variable_name for block in model.blocks]
    dataset = ingest_csv(config.data_path, model.outcome_column, predictors, require_outcome=False)
    family = get_family(model.family)
    eta = predict_saved(model, dataset.columns())
    table = pd.DataFrame({"eta": eta, "prediction": family.linkinv(eta)})

    with outputs(config.output_dir) as writer:
        files = {"predictions": writer.csv(table, "predictions.csv")}
        report = None
        if model.outcome_column in dataset.frame:
            report = {
                "dropped_rows": dataset.dropped_rows,
                "test": _metrics(evaluate(family, dataset.y, eta, model.phi)),
            }
            files["metrics"] = writer.json(report, "metrics.json")
    return {"eta": eta, "metrics": report, "files": files}


def coefficient_table(model: SavedModel) -> pd.DataFrame:
    frame = frame_template(model)
    state = state_from_saved(model)
    covariance = getattr(state, "covariance", None)
    se = np.sqrt(np.diag(covariance)) if covariance is not None else None
    rows = [{"variable": "(intercept)", "part": "intercept", "index": 0, "coefficient": model.intercept,
             "se": se[0] if se is not None else np.nan}]
    for (variable, part, k), column in frame.column_index.items():
        rows.append({
            "variable": variable,
            "part": part,
            "index": k,
            "coefficient": state.beta[column],
            "se": se[column + 1] if se is not None else np.nan,
        })
    return pd.DataFrame(rows, columns=["variable", "part", "index", "coefficient", "se"])


def run_report(config: RunConfig) -> Dict[str, Any]:
    model = _load(config)
    frame = frame_template(model)
    state = state_from_saved(model)
    covariance = getattr(state, "covariance", None)
    with outputs(config.output_dir) as writer:
        files = {"coefficients": writer.csv(coefficient_table(model), "coefficients.csv")}
        selection = select(frame, state, config.threshold)
        files["selection"] = writer.csv(selection.to_frame(), "selection.csv")
        for j, choice in enumerate(selection.variables):
            if choice.category != Category.NULL:
                writer.csv(curve_grid(frame.blocks[j], frame.block_columns(j), state.beta, covariance),
                           curve_filename(choice.variable))
    return {"selection": selection, "files": files}


def run_simulate(config: RunConfig) -> Dict[str, Any]:
    data = generate(config.sim)
    with outputs(config.output_dir) as writer:
        files = {
            "train": writer.csv(data.train_frame(), "train.csv"),
            "test": writer.csv(data.test_frame(), "test.csv"),
        }
    logger.info(f"[SIM] {config.sim.family.value} p={config.sim.p} n_train={config.sim.n_train} seed={config.sim.seed}")
    return {"data": data, "files": files}


