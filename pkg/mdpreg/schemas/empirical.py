"""Schemas for empirical model construction: sampling config, session logs, reports."""

import re
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from mdpreg.core.exceptions import ArtifactIOError

END_MARKER = "END"
TRUNCATED_MARKER = "TRUNC"

_STEP = re.compile(r"\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*,\s*([^,()]+?)\s*\)")


class RewardMode(str, Enum):
    EXACT = "exact"
    PER_SAMPLE_NOISE = "per-sample-noise"
    DIRECT_NOISE = "direct-noise"


class SamplingConfig(BaseModel):
    """How an empirical model is drawn from a true one."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    samples_per_state_action: int = Field(ge=1)
    reward_noise_std: float = Field(default=0.0, ge=0.0)
    seed: int = Field(ge=0, lt=2**64)
    reward_mode: RewardMode = RewardMode.EXACT


class Step(BaseModel):
    model_config = ConfigDict(frozen=True)

    action: int = Field(ge=0)
    reward: float
    next_state: int = Field(ge=0)


class Session(BaseModel):
    """One logged session: a start state and the steps taken from it."""

    model_config = ConfigDict(frozen=True)

    start_state: int = Field(ge=0)
    steps: tuple[Step, ...] = ()
    truncated: bool = False

    def to_line(self) -> str:
        steps = " ".join(f"({s.action},{float(s.reward)!r},{s.next_state})" for s in self.steps)
        marker = TRUNCATED_MARKER if self.truncated else END_MARKER
        return f"{self.start_state}; {steps}; {marker}"


class SessionLog(BaseModel):
    """
    Line-delimited session records::

        start_state; (action,reward,next_state) (action,reward,next_state) ...; END|TRUNC

    Blank lines and lines starting with ``#`` are ignored.
    """

    model_config = ConfigDict(frozen=True)

    sessions: tuple[Session, ...] = ()

    @property
    def num_steps(self) -> int:
        return sum(len(session.steps) for session in self.sessions)

    def to_text(self) -> str:
        return "".join(session.to_line() + "\n" for session in self.sessions)

    @classmethod
    def from_text(cls, text: str, path: Path | str = "<memory>") -> "SessionLog":
        sessions = []
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            sessions.append(_parse_line(line, path, number))
        return cls(sessions=tuple(sessions))


def _parse_line(line: str, path: Path | str, number: int) -> Session:
    parts = [part.strip() for part in line.split(";")]
    if len(parts) != 3:
        raise ArtifactIOError(
            path, "expected 'start; (action,reward,next_state) ...; END|TRUNC'", number
        )
    start, body, marker = parts
    if marker not in (END_MARKER, TRUNCATED_MARKER):
        raise ArtifactIOError(path, f"session must end with END or TRUNC, got {marker!r}", number)
    if _STEP.sub("", body).strip():
        raise ArtifactIOError(path, f"malformed steps: {body!r}", number)
    try:
        steps = tuple(
            Step(action=int(a), reward=float(r), next_state=int(t))
            for a, r, t in _STEP.findall(body)
        )
        return Session(
            start_state=int(start), steps=steps, truncated=marker == TRUNCATED_MARKER
        )
    except (ValueError, ValidationError) as exc:
        raise ArtifactIOError(path, f"invalid session record: {exc}", number) from exc


class CountsReport(BaseModel):
    """Observation counts behind a log-estimated model."""

    model_config = ConfigDict(extra="forbid")

    num_states: int
    num_actions: int
    terminal_state: int
    num_sessions: int = 0
    truncated_sessions: int = 0
    total_steps: int = 0
    counts: list[list[int]] = Field(description="observations per [state][action]")
    unobserved: list[tuple[int, int]] = Field(
        default_factory=list,
        description="non-terminal (state, action) pairs routed to the terminal state",
    )


class ModelDistanceReport(BaseModel):
    """Discrepancy between two models of the same shape (TV = half the row L1)."""

    model_config = ConfigDict(extra="forbid")

    avg_row_l1_per_action: list[float]
    avg_row_l1: float
    avg_tv: float
    max_tv: float
    reward_rmse: float
