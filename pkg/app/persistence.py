"""
Saved-model document: build, write, read, and predict from it.

The file is the pydantic JSON dump of `SavedModel`. Floats are written in
shortest round-trip form, so load followed by save reproduces the bytes.
"""
import logging
import os
from typing import Mapping, Optional

import numpy as np
from pydantic import ValidationError

from app.basis import BasisExpansion
from app.config import Config
from app.em_cd import FitState
from app.em_iwls import IwlsState
from app.errors import ConfigError, ParseError
from app.models import FitDiagnostics, SavedBlock, SavedModel, SolverKind, SsPrior
from app.reparam import ModelFrame, ReparamBasis, assemble_frame, predict_frame

logger = logging.getLogger(__name__)


def _block_to_saved(block: ReparamBasis) -> SavedBlock:
    expansion = block.expansion
    return SavedBlock(
        variable_name=block.variable_name,
        kind=expansion.kind,
        num_bases=expansion.num_bases,
        knot_rule=expansion.knot_rule,
        knots=expansion.knots.tolist(),
        constraint=expansion.constraint.tolist(),
        center_offsets=expansion.center_offsets.tolist(),
        u=block.u.tolist(),
        eigenvalues=block.eigenvalues.tolist(),
        transform=block.transform.tolist(),
        d0=block.d0,
        x_range=list(expansion.x_range),
    )


def _block_from_saved(saved: SavedBlock) -> ReparamBasis:
    u = np.asarray(saved.u, dtype=float)
    eigenvalues = np.asarray(saved.eigenvalues, dtype=float)
    expansion = BasisExpansion(
        variable_name=saved.variable_name,
        kind=saved.kind,
        knot_rule=saved.knot_rule,
        design=np.empty((0, saved.num_bases)),
        penalty=(u * eigenvalues) @ u.T,
        knots=np.asarray(saved.knots, dtype=float),
        center_offsets=np.asarray(saved.center_offsets, dtype=float),
        constraint=np.asarray(saved.constraint, dtype=float),
        x_range=(saved.x_range[0], saved.x_range[1]),
    )
    return ReparamBasis(
        variable_name=saved.variable_name,
        expansion=expansion,
        u=u,
        eigenvalues=eigenvalues,
        d0=saved.d0,
        transform=np.asarray(saved.transform, dtype=float),
        x0=np.empty((0, saved.d0)),
        xstar=np.empty((0, saved.num_bases - saved.d0)),
    )


def to_saved_model(frame: ModelFrame, state: FitState, family, prior: SsPrior, outcome_column: str,
                   selected_s0: Optional[float] = None) -> SavedModel:
    covariance = getattr(state, "covariance", None)
    return SavedModel(
        family=family.kind,
        solver=state.solver,
        prior=prior,
        outcome_column=outcome_column,
        blocks=[_block_to_saved(block) for block in frame.blocks],
        intercept=float(state.beta0),
        coefficients=np.asarray(state.beta, dtype=float).tolist(),
        theta=np.asarray(state.theta, dtype=float).tolist(),
        p_lin=np.asarray(state.p_lin, dtype=float).tolist(),
        p_nonlin=np.asarray(state.p_nonlin, dtype=float).tolist(),
        phi=float(state.phi),
        covariance=None if covariance is None else covariance.tolist(),
        selected_s0=selected_s0,
        diagnostics=FitDiagnostics(
            iterations=state.iterations,
            converged=state.converged,
            deviance_trace=np.asarray(state.deviance_trace, dtype=float).tolist(),
        ),
    )


def dumps(model: SavedModel) -> str:
    return model.model_dump_json(indent=2)


def save_model(model: SavedModel, path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(model))
    logger.info(f"[SAVE] model written to {path}")
    return path


def load_model(path: str) -> SavedModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            content = f.read()
    except FileNotFoundError as exc:
        raise ConfigError(f"model file not found: {path}") from exc
    try:
        model = SavedModel.model_validate_json(content)
    except ValidationError as exc:
        raise ParseError(f"{path}: not a valid model file ({exc.error_count()} errors)") from exc
    if model.format_version != Config.FORMAT_VERSION:
        raise ConfigError(f"{path}: format version {model.format_version}, expected {Config.FORMAT_VERSION}")
    return model


def frame_template(model: SavedModel) -> ModelFrame:
    """A zero-row frame carrying the stored bases; feed it to predict_frame."""
    return assemble_frame([_block_from_saved(block) for block in model.blocks])


def state_from_saved(model: SavedModel) -> FitState:
    common = dict(
        beta0=model.intercept,
        beta=np.asarray(model.coefficients, dtype=float),
        theta=np.asarray(model.theta, dtype=float),
        p_lin=np.asarray(model.p_lin, dtype=float),
        p_nonlin=np.asarray(model.p_nonlin, dtype=float),
        phi=model.phi,
        deviance_trace=np.asarray(model.diagnostics.deviance_trace, dtype=float),
        iterations=model.diagnostics.iterations,
        converged=model.diagnostics.converged,
        solver=model.solver,
    )
    if model.solver == SolverKind.EM_IWLS:
        covariance = None if model.covariance is None else np.asarray(model.covariance, dtype=float)
        return IwlsState(**common, covariance=covariance)
    return FitState(**common)


def predict_saved(model: SavedModel, data: Mapping) -> np.ndarray:
    """Linear predictor of a saved model on new data."""
    frame = predict_frame(frame_template(model), data)
    return model.intercept + frame.design @ np.asarray(model.coefficients, dtype=float)
