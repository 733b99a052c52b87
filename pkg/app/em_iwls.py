"""
EM-IWLS fitting of the spike-and-slab additive model.

The double-exponential prior is written as beta | tau2 ~ N(0, tau2),
tau2 | S ~ Gamma(1, 1 / (2 S^2)). Each iteration replaces tau2^-1 by its
conditional expectation, appends the prior as pseudo-observations to the
weighted working response and solves one weighted least-squares system for
the intercept and all smooth coefficients jointly.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from app.em_cd import FitState, converged
from app.errors import DimensionMismatch, SingularSystem
from app.family import Family
from app.models import EmSettings, PriorKind, SolverKind, SsPrior
from app.prior import e_step, update_thetas

logger = logging.getLogger(__name__)

BETA_FLOOR = 1e-8
INTERCEPT_VARIANCE = 1e6
RIDGE = 1e-12


@dataclass
class IwlsState(FitState):
    tau2_inv: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    normal_matrix: Optional[np.ndarray] = None

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def e_step_tau(inv_scale, beta):
    """E(tau^-2 | S, beta) = E(S^-1) / |beta|, with |beta| floored at BETA_FLOOR."""
    return np.asarray(inv_scale, dtype=float) / np.maximum(np.abs(beta), BETA_FLOOR)


def normal_matrix(design: np.ndarray, w: np.ndarray, prior_precision: np.ndarray) -> np.ndarray:
    """X' W X + diag(prior_precision): the normal equations of the augmented system."""
    weighted = design * w[:, None]
    matrix = design.T @ weighted
    matrix[np.diag_indices_from(matrix)] += prior_precision
    return 0.5 * (matrix + matrix.T)


def _factor(matrix: np.ndarray):
    try:
        return scipy.linalg.cho_factor(matrix, lower=True)
    except np.linalg.LinAlgError:
        pass
    ridge = RIDGE * max(1.0, float(np.max(np.abs(np.diag(matrix)))))
    logger.warning(f"[IWLS] normal equations not positive definite, adding ridge {ridge:.1e}")
    try:
        return scipy.linalg.cho_factor(matrix + ridge * np.eye(matrix.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("augmented normal equations are singular") from exc


def solve_augmented(design, z, w, prior_precision):
    """Weighted least squares of z on design with prior rows sqrt(prior_precision) * I and zero response.

    Returns the coefficients and the normal matrix they were solved with.
    """
    design = np.asarray(design, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    prior_precision = np.asarray(prior_precision, dtype=float)
    if design.shape[0] != z.size or z.size != w.size:
        raise DimensionMismatch(f"design has {design.shape[0]} rows, z {z.size}, w {w.size}")
    if prior_precision.size != design.shape[1]:
        raise DimensionMismatch(
            f"design has {design.shape[1]} columns, got {prior_precision.size} prior precisions"
        )
    matrix = normal_matrix(design, w, prior_precision)
    coefficients = scipy.linalg.cho_solve(_factor(matrix), design.T @ (w * z))
    return coefficients, matrix


def covariance_from_system(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    covariance = scipy.linalg.cho_solve(_factor(matrix), np.eye(matrix.shape[0]))
    return 0.5 * (covariance + covariance.T)


def coefficient_covariance(state: IwlsState) -> np.ndarray:
    """Covariance of (beta0, beta) at the last iteration of a fit."""
    if state.normal_matrix is None:
        raise SingularSystem("fit carries no normal equations")
    return covariance_from_system(state.normal_matrix)


def _prior_precision(prior: SsPrior, estep, groups, num_columns, beta, cold: bool) -> np.ndarray:
    inv_scale = estep.column_penalties(groups, num_columns)
    if prior.kind == PriorKind.NORMAL_MIXTURE:
        return inv_scale
    if cold:
        # nothing to divide by yet; start from 1 / E(tau^2) = 1 / (2 S^2)
        return 0.5 * inv_scale ** 2
    return e_step_tau(inv_scale, beta)


def fit_em_iwls(frame, y, family: Family, prior: SsPrior, settings: EmSettings = None,
                warm_start: Optional[FitState] = None) -> IwlsState:
    settings = settings or EmSettings()
    y = family.validate_response(y)
    if y.size != frame.n:
        raise DimensionMismatch(f"frame has {frame.n} rows, y has {y.size}")

    x = frame.design
    groups = frame.groups
    m = frame.num_columns
    design = np.hstack([np.ones((frame.n, 1)), x])

    if warm_start is not None:
        beta0, beta = warm_start.beta0, warm_start.beta.copy()
        theta, phi = warm_start.theta.copy(), warm_start.phi
    else:
        beta0, beta = family.initial_intercept(y), np.zeros(m)
        theta, phi = np.full(frame.p, 0.5), family.initial_phi(y)
    cold = warm_start is None

    dev_prev = family.deviance(y, family.linkinv(beta0 + x @ beta), phi)
    trace = []
    done = False
    iteration = 0
    precision = None
    matrix = None

    for iteration in range(1, settings.max_em_iter + 1):
        estep = e_step(prior, theta, beta, groups)
        precision = _prior_precision(prior, estep, groups, m, beta, cold and iteration == 1)

        eta = beta0 + x @ beta
        z, w = family.pseudo_data(y, eta, phi)
        coefficients, matrix = solve_augmented(design, z, w, np.concatenate([[1.0 / INTERCEPT_VARIANCE], precision]))
        beta0, beta = float(coefficients[0]), coefficients[1:]

        if family.has_dispersion:
            residual = y - beta0 - x @ beta
            phi = float((residual @ residual + phi * np.sum(precision * beta ** 2)) / frame.n)
        theta = update_thetas(estep, groups, prior.a, prior.b)

        dev = family.deviance(y, family.linkinv(beta0 + x @ beta), phi)
        trace.append(dev)
        logger.debug(f"[EM-IWLS] iter {iteration} deviance={dev:.6f} phi={phi:.6f}")
        if converged(dev, dev_prev, settings.epsilon):
            done = True
            break
        dev_prev = dev

    if not done:
        logger.warning(f"[NonConvergence] EM-IWLS stopped at max_em_iter={settings.max_em_iter} (s0={prior.s0})")

    final = e_step(prior, theta, beta, groups)
    return IwlsState(
        beta0=beta0,
        beta=beta,
        theta=theta,
        p_lin=final.p_lin,
        p_nonlin=final.p_nonlin,
        phi=float(phi),
        deviance_trace=np.asarray(trace),
        iterations=iteration,
        converged=done,
        solver=SolverKind.EM_IWLS,
        tau2_inv=precision,
        covariance=covariance_from_system(matrix),
        normal_matrix=matrix,
    )
