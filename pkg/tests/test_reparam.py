import numpy as np
import pytest
from scipy.interpolate import BSpline

from app.basis import BasisExpansion, build_basis
from app.errors import AsymmetricPenalty, EmptyFrame, MissingVariable, NegativeEigenvalueBeyondTolerance, RowCountMismatch
from app.models import KnotRule, SmoothKind, SmoothSpec
from app.reparam import LINEAR, NONLINEAR, assemble_frame, build_frame, predict_frame, reparameterize
from conftest import columns_of, specs_for


def _expansion(design, penalty, name="x"):
    k = penalty.shape[0]
    return BasisExpansion(
        variable_name=name,
        kind=SmoothKind.CUBIC_SPLINE,
        knot_rule=KnotRule.QUANTILE,
        design=design,
        penalty=penalty,
        knots=np.empty(0),
        center_offsets=np.zeros(k),
        constraint=np.eye(k),
        x_range=(0.0, 1.0),
    )


def _random_psd(rng, k, rank):
    a = rng.normal(size=(k, rank))
    return a @ a.T


def test_parametric_linear_has_one_linear_column(rng):
    x = rng.normal(size=40)
    block = reparameterize(build_basis(x, SmoothSpec(variable_name="z", kind=SmoothKind.PARAMETRIC_LINEAR)))

    assert block.d0 == 1
    assert block.xstar.shape == (40, 0)
    assert np.allclose(block.x0[:, 0], x - x.mean(), atol=1e-14)


def test_diagonal_penalty_keeps_identity_columns():
    block = reparameterize(_expansion(np.eye(2), np.diag([0.0, 2.0])))

    assert block.d0 == 1
    assert np.allclose(block.u, np.eye(2), atol=1e-14)
    assert np.allclose(block.x0[:, 0], [1.0, 0.0])
    assert np.allclose(block.xstar[:, 0], [0.0, 1.0 / np.sqrt(2.0)])


@pytest.mark.parametrize("rank", [9, 8, 5])
def test_random_psd_penalties(rng, rank):
    for _ in range(100 // 3 + 1):
        penalty = _random_psd(rng, 10, rank)
        design = rng.normal(size=(30, 10))
        block = reparameterize(_expansion(design, penalty))

        scale = np.max(np.abs(penalty))
        reconstructed = (block.u * block.eigenvalues) @ block.u.T
        assert float(np.max(np.abs(reconstructed - penalty))) < 1e-9 * max(1.0, scale)
        assert float(np.max(np.abs(block.u.T @ block.u - np.eye(10)))) < 1e-10
        assert np.all(np.diff(block.eigenvalues) >= 0)
        assert block.d0 == 10 - rank
        assert block.x0.shape[1] + block.xstar.shape[1] == 10

        # nonlinear coefficients see an identity penalty
        diagonalized = block.transform.T @ penalty @ block.transform
        expected = np.diag(np.r_[np.zeros(block.d0), np.ones(rank)])
        assert float(np.max(np.abs(diagonalized - expected))) < 1e-9 * max(1.0, scale)

        # same fitted values for c and its transformed coordinates
        c = rng.normal(size=10)
        transformed = np.linalg.solve(block.transform, c)
        combined = np.hstack([block.x0, block.xstar])
        assert float(np.max(np.abs(design @ c - combined @ transformed))) < 1e-9 * max(1.0, np.abs(design @ c).max())


def test_eigenvector_signs_are_fixed(rng):
    block = reparameterize(_expansion(rng.normal(size=(20, 6)), _random_psd(rng, 6, 5)))
    pivots = np.argmax(np.abs(block.u), axis=0)
    assert np.all(block.u[pivots, np.arange(6)] > 0)


def test_linear_column_spans_penalty_null_space(rng):
    x = rng.uniform(size=300)
    expansion = build_basis(x, SmoothSpec(variable_name="x", num_bases=8))
    block = reparameterize(expansion)
    centered = x - x.mean()

    # the single null column is the centered linear trend
    projection = block.x0 @ np.linalg.lstsq(block.x0, centered, rcond=None)[0]
    assert np.linalg.norm(projection - centered) < 1e-8 * np.linalg.norm(centered)


def test_asymmetric_penalty_raises():
    with pytest.raises(AsymmetricPenalty):
        reparameterize(_expansion(np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]])))


def test_negative_eigenvalue_raises():
    with pytest.raises(NegativeEigenvalueBeyondTolerance):
        reparameterize(_expansion(np.eye(2), np.diag([-1.0, 1.0])))


def test_assemble_frame_column_bookkeeping(gaussian_frame):
    frame = gaussian_frame

    assert frame.num_columns == 4 * 6
    assert sorted(frame.column_index.values()) == list(range(24))
    for j, group in enumerate(frame.groups):
        assert group.linear.tolist() == [6 * j]
        assert group.nonlinear.tolist() == list(range(6 * j + 1, 6 * j + 6))
        assert frame.column_index[(group.name, LINEAR, 0)] == 6 * j
        assert frame.column_index[(group.name, NONLINEAR, 4)] == 6 * j + 5


def test_simulation_shape_gives_forty_columns(gaussian_data):
    frame = build_frame(columns_of(gaussian_data.x_train), specs_for(4, 10))
    assert frame.num_columns == 40
    assert frame.p == 4


def test_assemble_frame_errors(rng):
    with pytest.raises(EmptyFrame):
        assemble_frame([])

    short = reparameterize(_expansion(rng.normal(size=(10, 3)), _random_psd(rng, 3, 2)))
    long = reparameterize(_expansion(rng.normal(size=(12, 3)), _random_psd(rng, 3, 2), name="w"))
    with pytest.raises(RowCountMismatch):
        assemble_frame([short, long])


def test_predict_frame_on_training_data_is_identity(gaussian_data, gaussian_frame):
    again = predict_frame(gaussian_frame, columns_of(gaussian_data.x_train))
    assert float(np.max(np.abs(again.design - gaussian_frame.design))) < 1e-10

    one_row = predict_frame(gaussian_frame, columns_of(gaussian_data.x_test[:1]))
    assert one_row.design.shape == (1, gaussian_frame.num_columns)


def test_predict_frame_matches_direct_spline_evaluation(rng, gaussian_data, gaussian_frame):
    beta0 = 0.7
    beta = rng.normal(size=gaussian_frame.num_columns)
    x_new = gaussian_data.x_test[:25]
    eta = beta0 + predict_frame(gaussian_frame, columns_of(x_new)).design @ beta

    direct = np.full(25, beta0)
    for j, block in enumerate(gaussian_frame.blocks):
        expansion = block.expansion
        raw = BSpline(expansion.knots, np.eye(expansion.knots.size - 4), 3)(x_new[:, j])
        coefficients = expansion.constraint @ block.transform @ beta[gaussian_frame.block_columns(j)]
        direct += raw @ coefficients - expansion.center_offsets @ (block.transform @ beta[gaussian_frame.block_columns(j)])

    inside = np.all((x_new >= gaussian_data.x_train.min(axis=0)) & (x_new <= gaussian_data.x_train.max(axis=0)), axis=1)
    assert float(np.max(np.abs(eta[inside] - direct[inside]))) < 1e-8


def test_predict_frame_missing_variable(gaussian_frame, gaussian_data):
    data = columns_of(gaussian_data.x_test)
    del data["x3"]
    with pytest.raises(MissingVariable):
        predict_frame(gaussian_frame, data)


def test_bases_depend_only_on_their_rows(gaussian_data):
    columns = columns_of(gaussian_data.x_train)
    first = build_frame({k: v[:100] for k, v in columns.items()}, specs_for(4))
    second = build_frame({k: v[100:] for k, v in columns.items()}, specs_for(4))
    assert not np.allclose(first.blocks[0].expansion.knots, second.blocks[0].expansion.knots)
