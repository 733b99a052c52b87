"""
Synthetic additive-model data.

Four active covariates: two periodic, one linear and one quadratic effect.
Every covariate after the fourth is pure noise.
"""
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
from scipy.special import expit

from app.models import FamilyKind, SimConfig

ACTIVE = 4


def true_eta(x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return (5.0 * np.sin(2.0 * np.pi * x[:, 0])
            - 4.0 * np.cos(2.0 * np.pi * x[:, 1] - 0.5)
            + 6.0 * (x[:, 2] - 0.5)
            - 5.0 * (x[:, 3] ** 2 - 0.3))


def column_names(p: int) -> List[str]:
    return [f"x{j}" for j in range(1, p + 1)]


@dataclass
class SimData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    eta_train: np.ndarray
    eta_test: np.ndarray
    config: SimConfig

    @property
    def eta_true(self) -> np.ndarray:
        return self.eta_test

    def train_frame(self) -> pd.DataFrame:
        return _as_frame(self.x_train, self.y_train)

    def test_frame(self) -> pd.DataFrame:
        return _as_frame(self.x_test, self.y_test)


def _as_frame(x: np.ndarray, y: np.ndarray) -> pd.DataFrame:
    frame = pd.DataFrame(x, columns=column_names(x.shape[1]))
    frame.insert(0, "y", y)
    return frame


def _response(rng: np.random.Generator, eta: np.ndarray, config: SimConfig) -> np.ndarray:
    if config.family == FamilyKind.BINOMIAL:
        return rng.binomial(1, expit(eta)).astype(float)
    return eta + rng.normal(0.0, np.sqrt(config.dispersion), size=eta.size)


def generate(config: SimConfig, rng: np.random.Generator = None) -> SimData:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    x_train = rng.standard_normal((config.n_train, config.p))
    x_test = rng.standard_normal((config.n_test, config.p))
    eta_train = true_eta(x_train)
    eta_test = true_eta(x_test)
    return SimData(
        x_train=x_train,
        y_train=_response(rng, eta_train, config),
        x_test=x_test,
        y_test=_response(rng, eta_test, config),
        eta_train=eta_train,
        eta_test=eta_test,
        config=config,
    )


def replicate_streams(seed: int, replicates: int) -> List[np.random.Generator]:
    """One independent generator per replicate, split from a single seed."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(replicates)]


def generate_replicates(config: SimConfig, replicates: int) -> List[SimData]:
    return [generate(config, rng) for rng in replicate_streams(config.seed, replicates)]
