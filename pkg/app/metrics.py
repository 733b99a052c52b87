"""Prediction performance measures."""
from typing import Optional

import numpy as np
from pydantic import BaseModel
from sklearn.metrics import brier_score_loss, mean_absolute_error, mean_squared_error, r2_score, roc_auc_score

from app.errors import DimensionMismatch, SingleClass, ZeroVariance
from app.family import Family
from app.models import FamilyKind

MISCLASS_THRESHOLD = 0.5


class MetricReport(BaseModel):
    n: int
    deviance: float
    r2: Optional[float] = None
    mse: Optional[float] = None
    mae: Optional[float] = None
    auc: Optional[float] = None
    brier: Optional[float] = None
    misclass: Optional[float] = None


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"y has {y.size} entries, predictions have {yhat.size}")
    return y, yhat


def r_squared(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if y.size < 2 or np.all(y == y[0]):
        raise ZeroVariance("R^2 needs at least two distinct responses")
    return float(r2_score(y, yhat))


def auc(y, score) -> float:
    """Area under the ROC curve; tied scores get half credit."""
    y, score = _pair(y, score)
    if np.unique(y).size < 2:
        raise SingleClass("AUC needs both classes")
    return float(roc_auc_score(y, score))


def brier(y, p) -> float:
    y, p = _pair(y, p)
    return float(brier_score_loss(y, p))


def misclass(y, p) -> float:
    y, p = _pair(y, p)
    return float(np.mean(np.abs(y - p) > MISCLASS_THRESHOLD))


def mse(y, yhat) -> float:
    return float(mean_squared_error(*_pair(y, yhat)))


def mae(y, yhat) -> float:
    return float(mean_absolute_error(*_pair(y, yhat)))


def evaluate(family: Family, y, eta, phi: float = 1.0) -> MetricReport:
    """Family-specific metric block for responses y and linear predictor eta."""
    y = family.validate_response(y)
    mu = family.linkinv(eta)
    report = {"n": int(y.size), "deviance": family.deviance(y, mu, phi)}
    if family.kind == FamilyKind.GAUSSIAN:
        report.update(r2=r_squared(y, mu), mse=mse(y, mu), mae=mae(y, mu))
    else:
        report.update(auc=auc(y, mu), brier=brier(y, mu), misclass=misclass(y, mu))
    return MetricReport(**report)
