import numpy as np
import pytest

from app.models import FamilyKind, SimConfig, SmoothSpec
from app.reparam import build_frame
from app.sim import column_names, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gaussian_data():
    return generate(SimConfig(n_train=200, n_test=200, p=4, family=FamilyKind.GAUSSIAN, seed=11))


@pytest.fixture
def binomial_data():
    return generate(SimConfig(n_train=300, n_test=300, p=4, family=FamilyKind.BINOMIAL, seed=12))


def columns_of(x):
    return dict(zip(column_names(x.shape[1]), x.T))


def specs_for(p, num_bases=6):
    return [SmoothSpec(variable_name=name, num_bases=num_bases) for name in column_names(p)]


@pytest.fixture
def gaussian_frame(gaussian_data):
    return build_frame(columns_of(gaussian_data.x_train), specs_for(4))
