"""Bi-level selection: null, linear-only or linear plus nonlinear, per variable."""
from enum import Enum
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.basis import evaluate_basis
from app.config import Config
from app.reparam import ModelFrame, ReparamBasis


class Category(str, Enum):
    NULL = "null"
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


def classify(p_lin: float, p_nonlin: float, threshold: float = Config.THRESHOLD) -> Category:
    # a selected nonlinear part carries its linear part with it
    if p_nonlin > threshold:
        return Category.NONLINEAR
    if p_lin > threshold:
        return Category.LINEAR
    return Category.NULL


class VariableSelection(BaseModel):
    variable: str
    p_lin: float
    p_nonlin: float
    category: Category
    n_zero: int
    num_coefficients: int


class SelectionReport(BaseModel):
    threshold: float
    variables: List[VariableSelection]

    def selected(self) -> List[str]:
        return [v.variable for v in self.variables if v.category != Category.NULL]

    def to_frame(self) -> pd.DataFrame:
        columns = ["variable", "p_lin", "p_nonlin", "category", "n_zero", "num_coefficients"]
        rows = [{**v.model_dump(), "category": v.category.value} for v in self.variables]
        return pd.DataFrame(rows, columns=columns)


def select(frame: ModelFrame, state, threshold: float = Config.THRESHOLD) -> SelectionReport:
    variables = []
    for j, group in enumerate(frame.groups):
        columns = frame.block_columns(j)
        variables.append(VariableSelection(
            variable=group.name,
            p_lin=float(state.p_lin[j]),
            p_nonlin=float(state.p_nonlin[j]),
            category=classify(state.p_lin[j], state.p_nonlin[j], threshold),
            n_zero=int(np.sum(state.beta[columns] == 0.0)),
            num_coefficients=int(columns.size),
        ))
    return SelectionReport(threshold=threshold, variables=variables)


def curve_grid(block: ReparamBasis, columns: np.ndarray, beta: np.ndarray,
               covariance: Optional[np.ndarray] = None, points: int = Config.CURVE_POINTS) -> pd.DataFrame:
    """Fitted smooth of one variable on an even grid over its training range.

    `covariance` is over (beta0, beta); when given, pointwise +-2 SE bands are added.
    """
    lower, upper = block.expansion.x_range
    x = np.linspace(lower, upper, points)
    design = evaluate_basis(block.expansion, x) @ block.transform
    curve = pd.DataFrame({"x": x, "fit": design @ beta[columns]})
    if covariance is not None:
        sub = covariance[np.ix_(columns + 1, columns + 1)]
        se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", design, sub, design), 0.0, None))
        curve["se"] = se
        curve["lower"] = curve["fit"] - 2.0 * se
        curve["upper"] = curve["fit"] + 2.0 * se
    return curve
