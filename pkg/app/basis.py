"""
Smoothing-function bases and their wiggliness penalties.

A cubic smooth with K bases starts from K + 1 clamped cubic B-splines. The
sum-to-zero constraint over the training rows removes one dimension, which
leaves K centered columns and a penalty whose only null direction is the
linear trend. A parametric term is the centered variable itself with a
1x1 zero penalty.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import null_space

from app.errors import DimensionMismatch, NonFiniteInput, TooFewDistinctValues
from app.models import KnotRule, SmoothKind, SmoothSpec

logger = logging.getLogger(__name__)

DEGREE = 3
# B'' is piecewise linear, so any Gauss-Legendre rule with >= 2 nodes per knot interval is exact
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class BasisExpansion:
    variable_name: str
    kind: SmoothKind
    knot_rule: KnotRule
    design: np.ndarray
    penalty: np.ndarray
    knots: np.ndarray
    center_offsets: np.ndarray
    constraint: np.ndarray
    x_range: Tuple[float, float]
    warnings: Tuple[str, ...] = ()

    @property
    def num_bases(self) -> int:
        return self.penalty.shape[0]


def _as_finite_vector(x, name: str) -> np.ndarray:
    values = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput(f"{name}: input contains NaN or Inf")
    return values


def _interior_knots(x: np.ndarray, num_bases: int, rule: KnotRule) -> np.ndarray:
    count = num_bases - 3
    if count <= 0:
        return np.empty(0)
    if rule == KnotRule.UNIFORM:
        return np.linspace(x.min(), x.max(), count + 2)[1:-1]
    return np.quantile(x, np.linspace(0.0, 1.0, count + 2)[1:-1])


def _raw_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Clamped cubic B-splines at x, continued linearly outside the boundary knots."""
    n_raw = len(knots) - DEGREE - 1
    spline = BSpline(knots, np.eye(n_raw), DEGREE, extrapolate=True)
    lower, upper = knots[0], knots[-1]
    clipped = np.clip(x, lower, upper)
    values = spline(clipped)

    outside = (x < lower) | (x > upper)
    if np.any(outside):
        slopes = spline.derivative(1)(np.array([lower, upper]))
        below = x < lower
        above = x > upper
        values[below] += np.outer(x[below] - lower, slopes[0])
        values[above] += np.outer(x[above] - upper, slopes[1])
    return values


def second_derivative_gram(knots: np.ndarray) -> np.ndarray:
    """Exact Gram matrix of B-spline second derivatives, one quadrature rule per knot interval."""
    n_raw = len(knots) - DEGREE - 1
    curvature = BSpline(knots, np.eye(n_raw), DEGREE, extrapolate=True).derivative(2)
    breaks = np.unique(knots)
    gram = np.zeros((n_raw, n_raw))
    for left, right in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (right - left)
        points = left + half * (_GL_NODES + 1.0)
        d2 = curvature(points)
        gram += (d2 * (half * _GL_WEIGHTS)[:, None]).T @ d2
    return 0.5 * (gram + gram.T)


def build_basis(x, spec: SmoothSpec) -> BasisExpansion:
    values = _as_finite_vector(x, spec.variable_name)
    n = values.size

    if spec.kind == SmoothKind.PARAMETRIC_LINEAR:
        if n < 2:
            raise DimensionMismatch(f"{spec.variable_name}: need at least 2 observations, got {n}")
        offset = np.array([values.mean()])
        return BasisExpansion(
            variable_name=spec.variable_name,
            kind=spec.kind,
            knot_rule=spec.knot_rule,
            design=(values - offset[0])[:, None],
            penalty=np.zeros((1, 1)),
            knots=np.empty(0),
            center_offsets=offset,
            constraint=np.eye(1),
            x_range=(float(values.min()), float(values.max())),
        )

    num_bases = spec.num_bases
    distinct = np.unique(values).size
    if distinct < num_bases:
        raise TooFewDistinctValues(
            f"{spec.variable_name}: {distinct} distinct values, need at least {num_bases}"
        )
    if n < num_bases + 1:
        raise DimensionMismatch(f"{spec.variable_name}: need at least {num_bases + 1} observations, got {n}")

    lower, upper = values.min(), values.max()
    interior = _interior_knots(values, num_bases, spec.knot_rule)
    kept = np.unique(interior)
    kept = kept[(kept > lower) & (kept < upper)]
    warnings = ()
    if kept.size < interior.size:
        reduced = kept.size + 3
        message = (f"{spec.variable_name}: {interior.size - kept.size} tied knots collapsed, "
                   f"num_bases {num_bases} -> {reduced}")
        logger.warning(f"[WARN] {message}")
        warnings = (message,)
        num_bases = reduced

    knots = np.concatenate([np.repeat(lower, DEGREE + 1), kept, np.repeat(upper, DEGREE + 1)])
    raw = _raw_basis(values, knots)

    # sum-to-zero over the training rows: coefficients live in the complement of colsum(raw)
    constraint = null_space(raw.sum(axis=0)[None, :])
    constrained = raw @ constraint
    offsets = constrained.mean(axis=0)
    penalty = constraint.T @ second_derivative_gram(knots) @ constraint

    return BasisExpansion(
        variable_name=spec.variable_name,
        kind=spec.kind,
        knot_rule=spec.knot_rule,
        design=constrained - offsets,
        penalty=0.5 * (penalty + penalty.T),
        knots=knots,
        center_offsets=offsets,
        constraint=constraint,
        x_range=(float(lower), float(upper)),
        warnings=warnings,
    )


def evaluate_basis(expansion: BasisExpansion, x_new) -> np.ndarray:
    """Same basis functions, knots and centering as at build time, evaluated at x_new."""
    values = _as_finite_vector(x_new, expansion.variable_name)
    if expansion.kind == SmoothKind.PARAMETRIC_LINEAR:
        return (values - expansion.center_offsets[0])[:, None]
    return _raw_basis(values, expansion.knots) @ expansion.constraint - expansion.center_offsets
