"""Pydantic schemas for solver configuration and solve reports."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mdpreg.core.config import get_settings
from mdpreg.schemas.mdp import Policy, ValueFunction


class TieBreak(str, Enum):
    LOWEST_INDEX = "lowest-index"
    HIGHEST_INDEX = "highest-index"


class SolveMethod(str, Enum):
    """Solver identifiers, shared by reports, sweeps and the CLI."""

    VALUE_ITERATION = "vi"
    L1 = "l1"
    RELATIVE_ENTROPY = "re"
    SHANNON = "shannon"
    ONE_SHOT = "osp"
    ONE_SHOT_REGULARIZED = "osp-reg"
    CONSTANT = "const"


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tolerance: float = Field(default=1e-10, gt=0.0, description="max-norm stop rule")
    max_iterations: int = Field(default=100_000, ge=1)
    tie_break: TieBreak = TieBreak.LOWEST_INDEX

    @classmethod
    def from_settings(cls) -> "SolverConfig":
        settings = get_settings()
        return cls(
            tolerance=settings.SOLVER_TOLERANCE,
            max_iterations=settings.SOLVER_MAX_ITERATIONS,
            tie_break=TieBreak(settings.SOLVER_TIE_BREAK),
        )


class SolveReport(BaseModel):
    """Outcome of one solver run."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    method: SolveMethod
    policy: Policy
    values: ValueFunction
    iterations: int = Field(ge=0, description="Bellman sweeps performed")
    final_residual: float = Field(ge=0.0, description="max-norm of the last value change")
    converged: bool
    config: SolverConfig

    @model_validator(mode="after")
    def _converged_within_tolerance(self) -> "SolveReport":
        if self.converged and self.final_residual > self.config.tolerance:
            raise ValueError(
                f"converged report must have residual <= {self.config.tolerance:g}, "
                f"got {self.final_residual:g}"
            )
        return self


class SolveReportDocument(BaseModel):
    """Textual (JSON) form of a SolveReport."""

    model_config = ConfigDict(extra="forbid")

    method: SolveMethod
    policy: list[list[float]]
    values: list[float]
    terminal_states: list[int] = Field(default_factory=list)
    iterations: int
    final_residual: float
    converged: bool
    config: SolverConfig
    prior: dict[str, float | int | None] | None = Field(
        default=None,
        description="Regularization echo: lam, kappa, q_preferred, preferred_action",
    )

    @classmethod
    def from_report(
        cls,
        report: SolveReport,
        prior: dict[str, float | int | None] | None = None,
    ) -> "SolveReportDocument":
        return cls(
            method=report.method,
            policy=report.policy.probs.tolist(),
            values=report.values.values.tolist(),
            terminal_states=sorted(report.values.terminal_states),
            iterations=report.iterations,
            final_residual=report.final_residual,
            converged=report.converged,
            config=report.config,
            prior=prior,
        )

    def to_report(self) -> SolveReport:
        return SolveReport(
            method=self.method,
            policy=Policy(probs=self.policy),
            values=ValueFunction(
                values=self.values, terminal_states=frozenset(self.terminal_states)
            ),
            iterations=self.iterations,
            final_residual=self.final_residual,
            converged=self.converged,
            config=self.config,
        )
