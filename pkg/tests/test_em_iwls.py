import numpy as np
import pytest

from app.em_iwls import (
    BETA_FLOOR,
    IwlsState,
    coefficient_covariance,
    covariance_from_system,
    e_step_tau,
    fit_em_iwls,
    solve_augmented,
)
from app.errors import DimensionMismatch, SingularSystem
from app.family import Binomial, Gaussian
from app.metrics import r_squared
from app.models import PriorKind, SmoothSpec, SolverKind, SsPrior
from app.reparam import build_frame
from conftest import columns_of, specs_for

gaussian = Gaussian()
binomial = Binomial()


def test_e_step_tau_examples():
    assert e_step_tau(10.5, 0.5) == pytest.approx(21.0)
    assert e_step_tau(1.0, 2.0) == pytest.approx(0.5)
    assert e_step_tau(3.0, 0.0) == pytest.approx(3.0 / BETA_FLOOR)
    assert np.isfinite(e_step_tau(3.0, 0.0))


def test_solve_augmented_matches_stacked_least_squares(rng):
    for _ in range(10):
        n, m = 60, 8
        design = rng.normal(size=(n, m))
        z = rng.normal(size=n)
        w = rng.uniform(0.1, 2.0, size=n)
        precision = rng.uniform(0.0, 5.0, size=m)

        coefficients, matrix = solve_augmented(design, z, w, precision)

        stacked = np.vstack([np.sqrt(w)[:, None] * design, np.diag(np.sqrt(precision))])
        target = np.concatenate([np.sqrt(w) * z, np.zeros(m)])
        expected, *_ = np.linalg.lstsq(stacked, target, rcond=None)
        assert float(np.max(np.abs(coefficients - expected))) < 1e-8
        assert float(np.max(np.abs(matrix - stacked.T @ stacked))) < 1e-8


def test_solve_augmented_dimension_checks(rng):
    with pytest.raises(DimensionMismatch):
        solve_augmented(rng.normal(size=(5, 2)), np.zeros(4), np.ones(5), np.ones(2))
    with pytest.raises(DimensionMismatch):
        solve_augmented(rng.normal(size=(5, 2)), np.zeros(5), np.ones(5), np.ones(3))


def test_covariance_is_the_inverse_normal_matrix(rng):
    a = rng.normal(size=(30, 5))
    matrix = a.T @ a + np.eye(5)
    covariance = covariance_from_system(matrix)

    assert float(np.max(np.abs(covariance @ matrix - np.eye(5)))) < 1e-10
    assert np.array_equal(covariance, covariance.T)


def test_singular_system_raises():
    with pytest.raises(SingularSystem):
        covariance_from_system(-np.eye(3))


def test_flat_prior_reproduces_least_squares(rng):
    flat = SsPrior(s0=1e10, s1=1e10)
    for _ in range(20):
        x = rng.normal(size=(100, 3))
        data = {f"x{j + 1}": x[:, j] for j in range(3)}
        frame = build_frame(data, [SmoothSpec(variable_name=name, num_bases=5) for name in data])
        y = 1.5 + np.sin(x[:, 0]) + 0.5 * x[:, 2] ** 2 + rng.normal(size=100)

        fit = fit_em_iwls(frame, y, gaussian, flat)

        design = np.column_stack([np.ones(100), frame.design])
        ols, *_ = np.linalg.lstsq(design, y, rcond=None)
        residual = y - design @ ols
        ols_covariance = (residual @ residual / 100) * np.linalg.inv(design.T @ design)

        assert fit.converged
        assert float(np.max(np.abs(np.r_[fit.beta0, fit.beta] - ols))) < 1e-6
        assert float(np.max(np.abs(fit.covariance - ols_covariance))) < 1e-6


def test_fit_state_invariants_and_determinism(gaussian_data, gaussian_frame):
    prior = SsPrior(s0=0.5, s1=1.0)
    first = fit_em_iwls(gaussian_frame, gaussian_data.y_train, gaussian, prior)
    second = fit_em_iwls(gaussian_frame, gaussian_data.y_train, gaussian, prior)

    assert isinstance(first, IwlsState)
    assert first.solver == SolverKind.EM_IWLS
    assert np.array_equal(first.beta, second.beta)
    assert np.array_equal(first.covariance, second.covariance)
    assert first.covariance.shape == (gaussian_frame.num_columns + 1,) * 2
    assert np.all(np.diag(first.covariance) > 0)
    assert np.allclose(first.standard_errors(), np.sqrt(np.diag(first.covariance)))
    assert np.allclose(coefficient_covariance(first), first.covariance)
    assert np.all(np.isfinite(first.tau2_inv)) and np.all(first.tau2_inv > 0)
    assert np.all((first.theta > 0) & (first.theta < 1))
    assert first.phi > 0
    fitted = first.linear_predictor(gaussian_frame.design)
    assert r_squared(gaussian_data.y_train, fitted) > 0.5


def test_normal_mixture_prior(gaussian_data, gaussian_frame):
    prior = SsPrior(s0=0.05, s1=1.0, kind=PriorKind.NORMAL_MIXTURE)
    fit = fit_em_iwls(gaussian_frame, gaussian_data.y_train, gaussian, prior)

    assert np.all(np.isfinite(fit.beta))
    assert np.all((fit.p_lin >= 0) & (fit.p_lin <= 1))
    assert np.all(np.diag(fit.covariance) > 0)


def test_binomial_fit(binomial_data):
    frame = build_frame(columns_of(binomial_data.x_train), specs_for(4))
    fit = fit_em_iwls(frame, binomial_data.y_train, binomial, SsPrior(s0=0.5, s1=1.0))

    assert fit.phi == 1.0
    assert np.all(np.isfinite(fit.beta))
    assert np.all(np.linalg.eigvalsh(fit.covariance) > 0)


def test_warm_start_and_length_checks(gaussian_data, gaussian_frame):
    prior = SsPrior(s0=0.5, s1=1.0)
    start = fit_em_iwls(gaussian_frame, gaussian_data.y_train, gaussian, prior)
    again = fit_em_iwls(gaussian_frame, gaussian_data.y_train, gaussian, SsPrior(s0=0.2, s1=1.0), warm_start=start)
    assert again.iterations >= 1

    with pytest.raises(DimensionMismatch):
        fit_em_iwls(gaussian_frame, gaussian_data.y_train[1:], gaussian, prior)


def test_missing_normal_matrix():
    state = IwlsState(beta0=0.0, beta=np.zeros(2), theta=np.full(1, 0.5), p_lin=np.zeros(1),
                      p_nonlin=np.zeros(1), phi=1.0, deviance_trace=np.zeros(0), iterations=0,
                      converged=False)
    with pytest.raises(SingularSystem):
        coefficient_covariance(state)


def test_pure_noise_shrinks_every_coefficient(rng):
    x = rng.normal(size=(300, 10))
    data = {f"x{j + 1}": x[:, j] for j in range(10)}
    frame = build_frame(data, [SmoothSpec(variable_name=name, num_bases=6) for name in data])
    y = rng.normal(size=300)

    fit = fit_em_iwls(frame, y, gaussian, SsPrior(s0=0.005, s1=1.0))
    assert float(np.max(np.abs(fit.beta))) < 1e-3
    assert np.all(fit.p_lin < 0.5)
