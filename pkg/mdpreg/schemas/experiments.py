"""Schemas for multi-trial sweeps and policy comparison tables."""

from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mdpreg.core.config import get_settings
from mdpreg.schemas.empirical import RewardMode
from mdpreg.schemas.solver import SolverConfig

DEFAULT_LAMBDA_GRID = (0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0)
DEFAULT_RE_GRID = ((0.25, 0.5), (0.25, 0.9), (0.25, 0.999), (0.25, 1.0 - 1e-6))
DEFAULT_SAMPLE_GRID = (50, 100, 500, 2000, 10000)


class ExampleName(str, Enum):
    EXAMPLE1 = "example1"
    EXAMPLE2 = "example2"
    CUSTOM = "custom"


class SweepMethod(str, Enum):
    L1 = "l1"
    RE = "re"
    OSP_REG = "osp-reg"


class EvaluationMetric(str, Enum):
    VALUE_PER_STATE = "value_per_state"
    WEIGHTED_OBJECTIVE = "weighted_objective"


class EvaluationModel(str, Enum):
    """Where learned policies are scored: the true model or an independent holdout sample."""

    TRUE = "true"
    HOLDOUT = "holdout"


class HyperPoint(BaseModel):
    """One regularization setting: ``lam`` for l1/osp-reg, ``(kappa, q_preferred)`` for re."""

    model_config = ConfigDict(frozen=True)

    lam: float | None = Field(default=None, ge=0.0)
    kappa: float | None = Field(default=None, gt=0.0)
    q_preferred: float | None = Field(default=None, gt=0.0, lt=1.0)


class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    example: ExampleName = ExampleName.EXAMPLE1
    num_states: int = Field(default=10, ge=3, description="N, including the terminal state")
    model_seed: int = Field(default=0, ge=0, description="seed of the Example 2 reward draws")
    model_path: Path | None = None
    preferred_action: int = Field(default=0, ge=0)
    method: SweepMethod = SweepMethod.L1
    lambdas: list[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    re_points: list[tuple[float, float]] = Field(
        default_factory=lambda: list(DEFAULT_RE_GRID),
        description="(kappa, q_preferred) pairs",
    )
    sample_grid: list[int] = Field(default_factory=lambda: list(DEFAULT_SAMPLE_GRID))
    samples_per_state_action: int = Field(default=100, ge=1)
    reward_noise_std: float = Field(default=0.0, ge=0.0)
    reward_mode: RewardMode = RewardMode.EXACT
    num_trials: int = Field(default_factory=lambda: get_settings().DEFAULT_TRIALS, ge=2)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    evaluation: EvaluationMetric = EvaluationMetric.VALUE_PER_STATE
    weights_path: Path | None = None
    evaluation_model: EvaluationModel = EvaluationModel.TRUE
    solver: SolverConfig = Field(default_factory=SolverConfig.from_settings)

    @model_validator(mode="after")
    def _validate_grid(self) -> "SweepConfig":
        if self.method is SweepMethod.RE:
            if not self.re_points:
                raise ValueError("re sweep needs a nonempty re_points grid")
            for kappa, q in self.re_points:
                if kappa <= 0.0 or not 0.0 < q < 1.0:
                    raise ValueError(f"re grid point ({kappa}, {q}) needs kappa > 0, q in (0, 1)")
        else:
            if not self.lambdas:
                raise ValueError(f"{self.method.value} sweep needs a nonempty lambdas grid")
            if any(lam < 0.0 for lam in self.lambdas):
                raise ValueError("lambdas must be nonnegative")
        if not self.sample_grid or any(n < 1 for n in self.sample_grid):
            raise ValueError("sample_grid must be nonempty with positive entries")
        return self

    def hyper_points(self) -> list[HyperPoint]:
        if self.method is SweepMethod.RE:
            return [HyperPoint(kappa=k, q_preferred=q) for k, q in self.re_points]
        return [HyperPoint(lam=lam) for lam in self.lambdas]


class GridPointResult(BaseModel):
    grid_param: float
    point: HyperPoint | None = None
    value_mean: float
    value_stderr: float
    trials: int = Field(ge=0, description="successful trials")
    failed_trials: int = Field(default=0, ge=0)
    preferred_fraction: float = Field(
        default=float("nan"), description="mean policy mass on the preferred action"
    )
    neg_log_q: float | None = Field(default=None, description="-ln q of non-preferred actions")
    best_param: float | None = Field(
        default=None, description="sample scaling: grid_param of the best regularized point"
    )
    trial_indices: list[int] = Field(default_factory=list)
    values: list[float] = Field(default_factory=list, description="per-trial metric")


class SweepResult(BaseModel):
    config: SweepConfig
    metric_name: str
    grid_param_name: str
    points: list[GridPointResult]
    rng_algorithm: str
    true_model_hash: str
    training_model_hashes: list[str | None] = Field(default_factory=list)
    evaluation_model_hashes: list[str | None] = Field(default_factory=list)


class PolicySuiteRow(BaseModel):
    name: str
    method: str
    lam: float | None = None
    objective: float
    improvement_pct: float
    rank: int
