# ============================================================
# File: app/models.py
# ============================================================
from enum import Enum
from typing import List, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import Config


class SmoothKind(str, Enum):
    CUBIC_SPLINE = "cubic_spline"
    PARAMETRIC_LINEAR = "parametric_linear"


class KnotRule(str, Enum):
    QUANTILE = "quantile"
    UNIFORM = "uniform"


class PriorKind(str, Enum):
    DE_MIXTURE = "de_mixture"
    NORMAL_MIXTURE = "normal_mixture"


class FamilyKind(str, Enum):
    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"


class SolverKind(str, Enum):
    EM_CD = "em_cd"
    EM_IWLS = "em_iwls"


class Criterion(str, Enum):
    DEVIANCE = "deviance"
    AUC = "auc"
    MSE = "mse"


class SmoothSpec(BaseModel):
    """Spline settings for one predictor."""
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "variable_name": "x1",
                "kind": "cubic_spline",
                "num_bases": 10,
                "knot_rule": "quantile"
            }
        }
    )
    variable_name: str
    kind: SmoothKind = SmoothKind.CUBIC_SPLINE
    num_bases: int = Config.DEFAULT_K
    knot_rule: KnotRule = KnotRule.QUANTILE

    @model_validator(mode="before")
    @classmethod
    def _linear_has_one_basis(cls, data):
        if isinstance(data, dict):
            kind = data.get("kind")
            if kind in (SmoothKind.PARAMETRIC_LINEAR, "parametric_linear") and "num_bases" not in data:
                data = {**data, "num_bases": 1}
        return data

    @model_validator(mode="after")
    def _check_bases(self):
        if self.kind == SmoothKind.CUBIC_SPLINE and self.num_bases < 3:
            raise ValueError(f"cubic_spline needs num_bases >= 3, got {self.num_bases}")
        if self.kind == SmoothKind.PARAMETRIC_LINEAR and self.num_bases != 1:
            raise ValueError(f"parametric_linear needs num_bases = 1, got {self.num_bases}")
        return self


class SsPrior(BaseModel):
    """Spike-and-slab spline prior. s0 == s1 is accepted as the single-prior limit."""
    model_config = ConfigDict(frozen=True)
    s0: float = Field(gt=0)
    s1: float = Field(default=Config.S1, gt=0)
    a: float = Field(default=1.0, gt=0)
    b: float = Field(default=1.0, gt=0)
    kind: PriorKind = PriorKind.DE_MIXTURE

    @model_validator(mode="after")
    def _check_order(self):
        if self.s0 > self.s1:
            raise ValueError(f"need s0 <= s1, got s0={self.s0}, s1={self.s1}")
        return self


class EmSettings(BaseModel):
    model_config = ConfigDict(frozen=True)
    epsilon: float = Field(default=Config.EPSILON, gt=0)
    max_em_iter: int = Field(default=Config.MAX_EM_ITER, gt=0)
    max_cd_iter: int = Field(default=Config.MAX_CD_ITER, gt=0)
    cd_tol: float = Field(default=Config.CD_TOL, gt=0)


class TuneGrid(BaseModel):
    model_config = ConfigDict(frozen=True)
    s0_values: List[float]
    s1: float = Field(default=Config.S1, gt=0)
    folds: int = Config.FOLDS
    seed: int = Field(default=Config.SEED, ge=0)
    criterion: Criterion = Criterion.DEVIANCE

    @field_validator("s0_values")
    @classmethod
    def _increasing(cls, values):
        if not values:
            raise ValueError("s0_values is empty")
        if values[0] <= 0:
            raise ValueError("s0 values must be positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("s0 values must be strictly increasing")
        return values

    @model_validator(mode="after")
    def _below_slab(self):
        if self.s0_values[-1] >= self.s1:
            raise ValueError(f"largest s0 ({self.s0_values[-1]}) must be below s1 ({self.s1})")
        return self


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)
    n_train: int = Field(default=500, gt=0)
    n_test: int = Field(default=1000, gt=0)
    p: int = Field(default=4, ge=4)
    family: FamilyKind = FamilyKind.GAUSSIAN
    dispersion: float = Field(default=1.0, gt=0)
    seed: int = Field(default=Config.SEED, ge=0)


class RunConfig(BaseModel):
    """Everything a CLI command needs, after flags and Config defaults are merged."""
    command: str
    data_path: Optional[str] = None
    outcome_column: str = "y"
    predictors: Optional[List[str]] = None
    family: FamilyKind = FamilyKind.GAUSSIAN
    solver: SolverKind = SolverKind.EM_CD
    prior_kind: PriorKind = PriorKind.DE_MIXTURE
    smooth_specs: Dict[str, SmoothSpec] = Field(default_factory=dict)
    default_k: int = Config.DEFAULT_K
    s0: Optional[float] = None
    s1: float = Config.S1
    s0_min: float = Config.S0_MIN
    s0_max: float = Config.S0_MAX
    s0_count: int = Config.S0_COUNT
    folds: int = Config.FOLDS
    criterion: Criterion = Criterion.DEVIANCE
    seed: int = Field(default=Config.SEED, ge=0)
    threshold: float = Field(default=Config.THRESHOLD, ge=0, le=1)
    n_jobs: int = Config.N_JOBS
    settings: EmSettings = Field(default_factory=EmSettings)
    test_data_path: Optional[str] = None
    model_path: Optional[str] = None
    spec_path: Optional[str] = None
    output_dir: str = Config.OUTPUT_DIR
    sim: SimConfig = Field(default_factory=SimConfig)
    replicates: int = Field(default=10, gt=0)
    solvers: List[SolverKind] = Field(default_factory=lambda: [SolverKind.EM_CD, SolverKind.EM_IWLS])

    @field_validator("folds")
    @classmethod
    def _at_least_two_folds(cls, value):
        if value < 2:
            raise ValueError(f"need at least 2 folds, got {value}")
        return value

    def grid(self) -> "TuneGrid":
        values = np.geomspace(self.s0_min, self.s0_max, self.s0_count) if self.s0_count > 1 else [self.s0_min]
        return TuneGrid(s0_values=list(map(float, values)), s1=self.s1, folds=self.folds, seed=self.seed,
                        criterion=self.criterion)

    def prior(self, s0: float) -> "SsPrior":
        return SsPrior(s0=s0, s1=self.s1, kind=self.prior_kind)


class SavedBlock(BaseModel):
    """One reparameterized smooth, enough to evaluate it on new data."""
    variable_name: str
    kind: SmoothKind
    num_bases: int
    knot_rule: KnotRule
    knots: List[float]
    constraint: List[List[float]]
    center_offsets: List[float]
    u: List[List[float]]
    eigenvalues: List[float]
    transform: List[List[float]]
    d0: int
    x_range: List[float]


class FitDiagnostics(BaseModel):
    iterations: int
    converged: bool
    deviance_trace: List[float]


class SavedModel(BaseModel):
    format_version: str = Config.FORMAT_VERSION
    family: FamilyKind
    solver: SolverKind
    prior: SsPrior
    outcome_column: str
    blocks: List[SavedBlock]
    intercept: float
    coefficients: List[float]
    theta: List[float]
    p_lin: List[float]
    p_nonlin: List[float]
    phi: float
    covariance: Optional[List[List[float]]] = None
    selected_s0: Optional[float] = None
    diagnostics: FitDiagnostics
