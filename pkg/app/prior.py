"""
Two-part spike-and-slab spline prior.

Each variable j has a linear-part indicator and a nonlinear-part indicator,
both Bernoulli(theta_j), theta_j ~ Beta(a, b). Under the double-exponential
kind s0/s1 are scales; under the normal kind they are variances.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from app.models import PriorKind, SsPrior

THETA_FLOOR = 1e-6


@dataclass(frozen=True)
class EStepResult:
    p_lin: np.ndarray
    p_nonlin: np.ndarray
    inv_scale_lin: np.ndarray
    inv_scale_nonlin: np.ndarray

    def column_penalties(self, groups: Sequence, num_columns: int) -> np.ndarray:
        """Spread the per-variable expected inverse scales onto design columns."""
        penalties = np.zeros(num_columns)
        for j, group in enumerate(groups):
            penalties[group.linear] = self.inv_scale_lin[j]
            penalties[group.nonlinear] = self.inv_scale_nonlin[j]
        return penalties


def de_log_density(beta, scale):
    return -np.log(2.0 * scale) - np.abs(beta) / scale


def de_density(beta, scale):
    return np.exp(de_log_density(beta, scale))


def normal_log_density(beta, variance):
    return -0.5 * np.log(2.0 * np.pi * variance) - np.square(beta) / (2.0 * variance)


def _log_density(prior: SsPrior):
    if prior.kind == PriorKind.NORMAL_MIXTURE:
        return normal_log_density
    return de_log_density


def _inclusion(theta: float, log_slab: float, log_spike: float) -> float:
    if theta <= 0.0:
        return 0.0
    if theta >= 1.0:
        return 1.0
    included = np.log(theta) + log_slab
    excluded = np.log1p(-theta) + log_spike
    return float(np.exp(included - logsumexp([included, excluded])))


def _part_inclusion(log_density, prior: SsPrior, theta: float, beta) -> float:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size == 0:
        return 0.0
    log_slab = float(np.sum(log_density(beta, prior.s1)))
    log_spike = float(np.sum(log_density(beta, prior.s0)))
    return _inclusion(theta, log_slab, log_spike)


def posterior_inclusion(prior: SsPrior, theta_j: float, beta_lin, beta_nonlin) -> Tuple[float, float]:
    """Posterior probabilities that the linear and the nonlinear part of one variable are in the slab.

    An empty part (e.g. the nonlinear part of a parametric term) gets probability 0.
    """
    log_density = _log_density(prior)
    return (_part_inclusion(log_density, prior, theta_j, beta_lin),
            _part_inclusion(log_density, prior, theta_j, beta_nonlin))


def log_prior(prior: SsPrior, theta, beta, groups: Sequence) -> float:
    """log f(beta | theta) with the indicators summed out, plus the Beta(a, b) log density of theta."""
    log_density = _log_density(prior)
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    total = 0.0
    for j, group in enumerate(groups):
        for columns in (group.linear, group.nonlinear):
            if columns.size == 0:
                continue
            part = beta[columns]
            total += logsumexp([np.log(theta[j]) + np.sum(log_density(part, prior.s1)),
                                np.log1p(-theta[j]) + np.sum(log_density(part, prior.s0))])
        total += (prior.a - 1.0) * np.log(theta[j]) + (prior.b - 1.0) * np.log1p(-theta[j])
    return float(total)


def expected_inv_scale(p, s0: float, s1: float):
    return (1.0 - p) / s0 + p / s1


def update_theta(p_j: float, p_star_j: float, a: float = 1.0, b: float = 1.0, trials: int = 2) -> float:
    """Beta posterior mode with `trials` indicators; trials=2 is (p + p* + a - 1) / (a + b)."""
    denominator = a + b + trials - 2
    if denominator > 0:
        theta = (p_j + p_star_j + a - 1.0) / denominator
    else:
        theta = (p_j + p_star_j + a) / (a + b + trials)
    return float(np.clip(theta, THETA_FLOOR, 1.0 - THETA_FLOOR))


def update_thetas(estep: EStepResult, groups: Sequence, a: float, b: float) -> np.ndarray:
    theta = np.empty(len(groups))
    for j, group in enumerate(groups):
        trials = int(group.linear.size > 0) + int(group.nonlinear.size > 0)
        theta[j] = update_theta(estep.p_lin[j], estep.p_nonlin[j], a, b, trials)
    return theta


def _estep(log_density, prior: SsPrior, theta, beta, groups: Sequence) -> EStepResult:
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    p_lin = np.empty(len(groups))
    p_nonlin = np.empty(len(groups))
    for j, group in enumerate(groups):
        p_lin[j] = _part_inclusion(log_density, prior, theta[j], beta[group.linear])
        p_nonlin[j] = _part_inclusion(log_density, prior, theta[j], beta[group.nonlinear])
    return EStepResult(
        p_lin=p_lin,
        p_nonlin=p_nonlin,
        inv_scale_lin=expected_inv_scale(p_lin, prior.s0, prior.s1),
        inv_scale_nonlin=expected_inv_scale(p_nonlin, prior.s0, prior.s1),
    )


def de_mixture_estep(prior: SsPrior, theta, beta, groups) -> EStepResult:
    return _estep(de_log_density, prior, theta, beta, groups)


def normal_mixture_estep(prior: SsPrior, theta, beta, groups) -> EStepResult:
    """E-step under N(0, s0) / N(0, s1); the inverse scales are expected inverse variances."""
    return _estep(normal_log_density, prior, theta, beta, groups)


def e_step(prior: SsPrior, theta, beta, groups) -> EStepResult:
    if prior.kind == PriorKind.NORMAL_MIXTURE:
        return normal_mixture_estep(prior, theta, beta, groups)
    return de_mixture_estep(prior, theta, beta, groups)
