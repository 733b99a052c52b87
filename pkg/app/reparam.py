"""
Eigen-reparameterization of smooth bases and assembly of the model design.

S = U D U^T with D ascending. X U splits into null-space (linear) columns and
range-space (nonlinear) columns; each nonlinear column is divided by sqrt(d_k)
so that the penalty on the new coefficients is the identity.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.basis import BasisExpansion, build_basis, evaluate_basis
from app.errors import (
    AsymmetricPenalty,
    EmptyFrame,
    MissingVariable,
    NegativeEigenvalueBeyondTolerance,
    RowCountMismatch,
)
from app.models import SmoothSpec

logger = logging.getLogger(__name__)

ZERO_EIGEN_RTOL = 1e-10
NEGATIVE_EIGEN_RTOL = 1e-10
SYMMETRY_RTOL = 1e-12

LINEAR = "linear"
NONLINEAR = "nonlinear"


@dataclass(frozen=True)
class ReparamBasis:
    variable_name: str
    expansion: BasisExpansion
    u: np.ndarray
    eigenvalues: np.ndarray
    d0: int
    transform: np.ndarray
    x0: np.ndarray
    xstar: np.ndarray

    @property
    def num_columns(self) -> int:
        return self.transform.shape[1]


@dataclass(frozen=True)
class VariableGroup:
    """Global column indices of one variable's linear and nonlinear parts."""
    name: str
    linear: np.ndarray
    nonlinear: np.ndarray


@dataclass(frozen=True)
class ModelFrame:
    blocks: Tuple[ReparamBasis, ...]
    design: np.ndarray
    column_index: Dict[Tuple[str, str, int], int]
    groups: Tuple[VariableGroup, ...]
    n: int

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def num_columns(self) -> int:
        return self.design.shape[1]

    @property
    def variable_names(self) -> List[str]:
        return [block.variable_name for block in self.blocks]

    def block_columns(self, j: int) -> np.ndarray:
        group = self.groups[j]
        return np.concatenate([group.linear, group.nonlinear])


def _fix_signs(u: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivots, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def reparameterize(expansion: BasisExpansion) -> ReparamBasis:
    penalty = np.asarray(expansion.penalty, dtype=float)
    scale = np.max(np.abs(penalty))
    if np.max(np.abs(penalty - penalty.T)) > SYMMETRY_RTOL * scale:
        raise AsymmetricPenalty(f"{expansion.variable_name}: smoothing penalty is not symmetric")

    eigenvalues, u = scipy.linalg.eigh(0.5 * (penalty + penalty.T))
    largest = eigenvalues[-1]
    if eigenvalues[0] < -NEGATIVE_EIGEN_RTOL * abs(largest):
        raise NegativeEigenvalueBeyondTolerance(
            f"{expansion.variable_name}: eigenvalue {eigenvalues[0]:.3e} below tolerance"
        )
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    u = _fix_signs(u)

    d0 = int(np.sum(eigenvalues <= ZERO_EIGEN_RTOL * largest))
    scaling = np.ones_like(eigenvalues)
    scaling[d0:] = 1.0 / np.sqrt(eigenvalues[d0:])
    transform = u * scaling[None, :]

    reparam_design = expansion.design @ transform
    return ReparamBasis(
        variable_name=expansion.variable_name,
        expansion=expansion,
        u=u,
        eigenvalues=eigenvalues,
        d0=d0,
        transform=transform,
        x0=reparam_design[:, :d0],
        xstar=reparam_design[:, d0:],
    )


def assemble_frame(bases: Sequence[ReparamBasis]) -> ModelFrame:
    if not bases:
        raise EmptyFrame("no smooth terms to assemble")
    n = bases[0].x0.shape[0]
    for block in bases:
        if block.x0.shape[0] != n or block.xstar.shape[0] != n:
            raise RowCountMismatch(
                f"{block.variable_name}: {block.x0.shape[0]} rows, expected {n}"
            )

    column_index = {}
    groups = []
    columns = []
    start = 0
    for block in bases:
        linear = np.arange(start, start + block.d0)
        nonlinear = np.arange(start + block.d0, start + block.num_columns)
        for k, col in enumerate(linear):
            column_index[(block.variable_name, LINEAR, k)] = int(col)
        for k, col in enumerate(nonlinear):
            column_index[(block.variable_name, NONLINEAR, k)] = int(col)
        groups.append(VariableGroup(block.variable_name, linear, nonlinear))
        columns.extend([block.x0, block.xstar])
        start += block.num_columns

    return ModelFrame(
        blocks=tuple(bases),
        design=np.hstack(columns),
        column_index=column_index,
        groups=tuple(groups),
        n=n,
    )


def predict_frame(template: ModelFrame, data: Mapping) -> ModelFrame:
    """Apply the stored knots, centering and eigen-scaling of `template` to new data."""
    blocks = []
    for block in template.blocks:
        if block.variable_name not in data:
            raise MissingVariable(f"variable '{block.variable_name}' missing from new data")
        design = evaluate_basis(block.expansion, data[block.variable_name]) @ block.transform
        blocks.append(replace(block, x0=design[:, :block.d0], xstar=design[:, block.d0:]))
    return assemble_frame(blocks)


def build_frame(data: Mapping, specs: Sequence[SmoothSpec]) -> ModelFrame:
    """Bases, reparameterization and assembly in one pass over the given rows."""
    blocks = []
    for spec in specs:
        if spec.variable_name not in data:
            raise MissingVariable(f"variable '{spec.variable_name}' missing from data")
        blocks.append(reparameterize(build_basis(data[spec.variable_name], spec)))
    frame = assemble_frame(blocks)
    logger.debug(f"[FRAME] {frame.p} variables, {frame.num_columns} columns, {frame.n} rows")
    return frame
