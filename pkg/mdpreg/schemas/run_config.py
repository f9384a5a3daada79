"""
Per-command options and the run configuration file.

Option keys equal the command's long flag names with dashes replaced by underscores.
A ``RunConfigFile`` holds one optional section per command; flags given on the command
line override the section's values, and the merged result is validated as a whole.
"""

from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mdpreg.schemas.empirical import RewardMode
from mdpreg.schemas.experiments import SweepConfig
from mdpreg.schemas.solver import SolveMethod, TieBreak


class _Options(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GenOptions(_Options):
    example: Literal["example1", "example2"]
    n: int | None = Field(default=None, ge=3)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    out: Path


class SampleOptions(_Options):
    model: Path
    n_samples: int = Field(default=100, ge=1)
    noise_std: float = Field(default=0.0, ge=0.0)
    reward_mode: RewardMode = RewardMode.EXACT
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    out: Path


class IngestOptions(_Options):
    log: Path
    num_states: int = Field(ge=1)
    num_actions: int = Field(ge=1)
    terminal_state: int | None = Field(default=None, ge=0)
    discount: float = Field(default=1.0, ge=0.0, le=1.0)
    out: Path
    counts_out: Path | None = None


class SimulateOptions(_Options):
    model: Path
    policy: Path
    num_sessions: int = Field(ge=0)
    max_steps: int = Field(default=1000, ge=1)
    weights: str = "uniform"
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    out: Path


class SolveOptions(_Options):
    model: Path
    method: SolveMethod
    lam: float | None = Field(default=None, ge=0.0, alias="lambda")
    kappa: float | None = Field(default=None, gt=0.0)
    q_pref: float | None = Field(default=None, gt=0.0, lt=1.0)
    pref_action: int = Field(default=0, ge=0)
    action: int | None = Field(default=None, ge=0)
    tolerance: float | None = Field(default=None, gt=0.0)
    max_iterations: int | None = Field(default=None, ge=1)
    tie_break: TieBreak | None = None
    out: Path | None = None


class EvalOptions(_Options):
    model: Path
    policy: Path
    weights: str = "uniform"


class SweepOptions(SweepConfig):
    scaling: bool = False
    out_dir: Path = Path("sweep")

    def sweep_config(self) -> SweepConfig:
        return SweepConfig.model_validate(self.model_dump(exclude={"scaling", "out_dir"}))


class CompareOptions(_Options):
    true_model: Path
    empirical_model: Path
    pref_action: int = Field(default=0, ge=0)
    lambdas: list[float] = Field(default_factory=lambda: [0.0])
    kappa: float | None = Field(default=None, gt=0.0)
    q_pref: float | None = Field(default=None, gt=0.0, lt=1.0)
    weights: str = "uniform"
    reference: str = "unregularized"
    out: Path | None = None


class DistanceOptions(_Options):
    model_a: Path
    model_b: Path
    out: Path | None = None


COMMAND_OPTIONS: dict[str, type[BaseModel]] = {
    "gen": GenOptions,
    "sample": SampleOptions,
    "ingest": IngestOptions,
    "simulate": SimulateOptions,
    "solve": SolveOptions,
    "eval": EvalOptions,
    "sweep": SweepOptions,
    "compare": CompareOptions,
    "distance": DistanceOptions,
}


def _option_keys(options: type[BaseModel]) -> set[str]:
    return {info.alias or name for name, info in options.model_fields.items()}


class RunConfigFile(BaseModel):
    """Declarative run document: ``{"solve": {"model": "m.json", "method": "vi"}, ...}``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    gen: dict[str, Any] | None = None
    sample: dict[str, Any] | None = None
    ingest: dict[str, Any] | None = None
    simulate: dict[str, Any] | None = None
    solve: dict[str, Any] | None = None
    eval: dict[str, Any] | None = None
    sweep: dict[str, Any] | None = None
    compare: dict[str, Any] | None = None
    distance: dict[str, Any] | None = None

    @model_validator(mode="after")
    def _reject_unknown_keys(self) -> "RunConfigFile":
        problems = []
        for command, options in COMMAND_OPTIONS.items():
            section = getattr(self, command) or {}
            unknown = sorted(set(section) - _option_keys(options))
            if unknown:
                problems.append(f"{command}: unknown keys {unknown}")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def section(self, command: str) -> dict[str, Any]:
        return dict(getattr(self, command) or {})
