"""
Pydantic domain types for tabular MDPs.

Storage convention: tensors indexed ``[a][s][t]`` for transitions and
rewards, ``[s][a]`` for policies and priors. Every type is frozen and its arrays are
read-only, so instances are safe to share between threads.
"""

import json
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mdpreg.core.exceptions import ModelValidationError
from mdpreg.services.graph import unabsorbed_states

ROW_SUM_TOLERANCE = 1e-9
# rows already within a few ulps of 1 are stored as given, so save -> load is exact
_RENORMALIZE_ABOVE = 8 * np.finfo(float).eps
Q_FLOOR = 1e-12
# relative rounding tolerated for priors built right at the floor
_FLOOR_SLACK = 1e-6
# scientific notation with 16 fractional digits: 17 significant digits, exact for float64
FLOAT_FORMAT = ".16e"
MODEL_DOCUMENT_VERSION = 1


def _frozen_array(value: object, ndim: int, name: str) -> np.ndarray:
    array = np.array(value, dtype=float, copy=True)
    if array.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must contain only finite entries")
    array.setflags(write=False)
    return array


def _check_distribution_rows(array: np.ndarray, name: str) -> np.ndarray:
    """Reject negative entries and rows off by more than the tolerance, renormalize the rest."""
    if np.any(array < 0.0):
        raise ValueError(f"{name} rows must be nonnegative")
    sums = array.sum(axis=-1, keepdims=True)
    worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if worst > ROW_SUM_TOLERANCE:
        raise ValueError(
            f"{name} rows must sum to 1 within {ROW_SUM_TOLERANCE:g} (worst deviation {worst:.3g})"
        )
    off = np.abs(sums - 1.0) > _RENORMALIZE_ABOVE
    normalized = np.where(off, array / sums, array)
    normalized.setflags(write=False)
    return normalized


class MdpModel(BaseModel):
    """Tabular model M = (S, A, P, r, gamma) with a set of absorbing terminal states."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    transitions: np.ndarray = Field(description="P[a, s, t], shape (|A|, |S|, |S|)")
    rewards: np.ndarray = Field(description="r[a, s, t], shape (|A|, |S|, |S|)")
    discount: float = Field(ge=0.0, le=1.0)
    terminal_states: frozenset[int] = Field(default_factory=frozenset)

    @field_validator("transitions", mode="before")
    @classmethod
    def _validate_transitions(cls, value: object) -> np.ndarray:
        array = _frozen_array(value, 3, "transitions")
        num_actions, num_states, num_targets = array.shape
        if num_actions < 1 or num_states < 1 or num_states != num_targets:
            raise ValueError(
                f"transitions must have shape (|A|, |S|, |S|) with |A|, |S| >= 1, got {array.shape}"
            )
        return _check_distribution_rows(array, "transitions")

    @field_validator("rewards", mode="before")
    @classmethod
    def _validate_rewards(cls, value: object) -> np.ndarray:
        return _frozen_array(value, 3, "rewards")

    @model_validator(mode="after")
    def _validate_model(self) -> "MdpModel":
        if self.rewards.shape != self.transitions.shape:
            raise ValueError(
                f"rewards shape {self.rewards.shape} must equal transitions shape "
                f"{self.transitions.shape}"
            )
        n = self.num_states
        for z in self.terminal_states:
            if not 0 <= z < n:
                raise ValueError(f"terminal state {z} is not a valid state index")
            if np.any(self.transitions[:, z, z] != 1.0):
                raise ValueError(f"terminal state {z} must be absorbing: P^a[z, z] = 1")
            if np.any(self.rewards[:, z, z] != 0.0):
                raise ValueError(f"terminal state {z} must carry zero reward: r^a[z, z] = 0")
        if self.discount == 1.0:
            if not self.terminal_states:
                raise ValueError("discount 1 requires at least one terminal state")
            stuck = unabsorbed_states(self.union_support(), self.terminal_states)
            if stuck.size:
                raise ValueError(
                    f"discount 1 requires every state to reach a terminal state; "
                    f"state {int(stuck[0])} cannot"
                )
        return self

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def nonterminal_mask(self) -> np.ndarray:
        mask = np.ones(self.num_states, dtype=bool)
        mask[list(self.terminal_states)] = False
        return mask

    def union_support(self) -> np.ndarray:
        """Boolean (|S|, |S|) matrix: t is reachable from s in one step under some action."""
        return np.any(self.transitions > 0.0, axis=0)

    def __repr__(self) -> str:
        return (
            f"<MdpModel states={self.num_states} actions={self.num_actions} "
            f"discount={self.discount} terminals={sorted(self.terminal_states)}>"
        )


class Policy(BaseModel):
    """Per-state distribution over actions, ``probs[s, a] = pi_s^a``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray

    @field_validator("probs", mode="before")
    @classmethod
    def _validate_probs(cls, value: object) -> np.ndarray:
        array = _frozen_array(value, 2, "policy")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"policy must have shape (|S|, |A|), got {array.shape}")
        return _check_distribution_rows(array, "policy")

    @classmethod
    def deterministic(cls, actions: np.ndarray | list[int], num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        if np.any(actions < 0) or np.any(actions >= num_actions):
            raise ModelValidationError(f"actions must lie in [0, {num_actions})")
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs=probs)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(probs=np.full((num_states, num_actions), 1.0 / num_actions))

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def actions(self) -> np.ndarray:
        """Most probable action per state (lowest index on ties)."""
        return np.argmax(self.probs, axis=1)


class ValueFunction(BaseModel):
    """Expected discounted return per state; exactly zero on terminal states."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    terminal_states: frozenset[int] = Field(default_factory=frozenset)

    @field_validator("values", mode="before")
    @classmethod
    def _validate_values(cls, value: object) -> np.ndarray:
        return _frozen_array(value, 1, "values")

    @model_validator(mode="after")
    def _terminal_values_are_zero(self) -> "ValueFunction":
        for z in self.terminal_states:
            if not 0 <= z < self.values.size:
                raise ValueError(f"terminal state {z} is not a valid state index")
            if self.values[z] != 0.0:
                raise ValueError(f"value at terminal state {z} must be exactly 0")
        return self

    def per_state_mean(self) -> float:
        """Arithmetic mean over non-terminal states ("value per state")."""
        mask = np.ones(self.values.size, dtype=bool)
        mask[list(self.terminal_states)] = False
        if not mask.any():
            return 0.0
        return float(self.values[mask].mean())


class StartWeights(BaseModel):
    """Objective weights e (nonnegative, not all zero)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray

    @field_validator("weights", mode="before")
    @classmethod
    def _validate_weights(cls, value: object) -> np.ndarray:
        array = _frozen_array(value, 1, "start weights")
        if np.any(array < 0.0):
            raise ValueError("start weights must be nonnegative")
        if not np.any(array > 0.0):
            raise ValueError("start weights must not be all zero")
        return array

    @classmethod
    def uniform(cls, num_states: int) -> "StartWeights":
        return cls(weights=np.ones(num_states))

    @classmethod
    def nonterminal(cls, model: MdpModel) -> "StartWeights":
        return cls(weights=model.nonterminal_mask.astype(float))

    def normalized(self) -> np.ndarray:
        return self.weights / self.weights.sum()


class PriorSpec(BaseModel):
    """
    Preferred-action prior.

    ``preferred`` maps a state to its preferred action set xi(s); states absent from the
    map have no preference (no action is penalized there). ``lam`` drives the L1 solver,
    ``kappa`` and ``prior_probs`` (q) drive the relative-entropy solver.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_states: int = Field(ge=1)
    num_actions: int = Field(ge=1)
    preferred: dict[int, frozenset[int]] = Field(default_factory=dict)
    lam: float = Field(default=0.0, ge=0.0)
    kappa: float | None = Field(default=None, gt=0.0)
    prior_probs: np.ndarray | None = None

    @field_validator("prior_probs", mode="before")
    @classmethod
    def _validate_prior_probs(cls, value: object) -> np.ndarray | None:
        if value is None:
            return None
        array = _check_distribution_rows(_frozen_array(value, 2, "prior_probs"), "prior_probs")
        if array.min() < Q_FLOOR * (1.0 - _FLOOR_SLACK):
            raise ValueError(f"prior_probs entries must be >= q_floor = {Q_FLOOR:g}")
        return array

    @model_validator(mode="after")
    def _validate_indices(self) -> "PriorSpec":
        for state, actions in self.preferred.items():
            if not 0 <= state < self.num_states:
                raise ValueError(f"preferred state {state} is not a valid state index")
            if not actions:
                raise ValueError(f"preferred action set of state {state} must be nonempty")
            bad = [a for a in actions if not 0 <= a < self.num_actions]
            if bad:
                raise ValueError(f"preferred actions {bad} of state {state} are not valid")
        if self.prior_probs is not None and self.prior_probs.shape != (
            self.num_states,
            self.num_actions,
        ):
            raise ValueError(
                f"prior_probs must have shape ({self.num_states}, {self.num_actions}), "
                f"got {self.prior_probs.shape}"
            )
        return self

    @classmethod
    def single_action(
        cls,
        num_states: int,
        num_actions: int,
        action: int,
        lam: float = 0.0,
        kappa: float | None = None,
        q_preferred: float | None = None,
    ) -> "PriorSpec":
        """
        Prefer ``action`` everywhere. With ``q_preferred`` the prior puts that mass on the
        preferred action and spreads the rest evenly over the other actions.
        """
        if not 0 <= action < num_actions:
            raise ModelValidationError(f"preferred action {action} is not in [0, {num_actions})")
        prior_probs = None
        if q_preferred is not None and num_actions == 1:
            prior_probs = np.ones((num_states, 1))
        elif q_preferred is not None:
            if not 0.0 < q_preferred < 1.0:
                raise ModelValidationError("q_preferred must lie in (0, 1)")
            rest = (1.0 - q_preferred) / (num_actions - 1)
            if np.isclose(rest, Q_FLOOR, rtol=_FLOOR_SLACK, atol=0.0):
                rest = max(rest, Q_FLOOR)
            prior_probs = np.full((num_states, num_actions), rest)
            prior_probs[:, action] = q_preferred
        return cls(
            num_states=num_states,
            num_actions=num_actions,
            preferred={s: frozenset({action}) for s in range(num_states)},
            lam=lam,
            kappa=kappa,
            prior_probs=prior_probs,
        )

    def preferred_mask(self) -> np.ndarray:
        mask = np.ones((self.num_states, self.num_actions), dtype=bool)
        for state, actions in self.preferred.items():
            mask[state] = False
            mask[state, list(actions)] = True
        return mask


class MdpModelDocument(BaseModel):
    """Versioned textual model file (JSON)."""

    model_config = ConfigDict(extra="forbid")

    version: Literal[1] = MODEL_DOCUMENT_VERSION
    num_states: int = Field(ge=1)
    num_actions: int = Field(ge=1)
    discount: float = Field(ge=0.0, le=1.0)
    terminal_states: list[int] = Field(default_factory=list)
    transitions: list[list[list[float]]]
    rewards: list[list[list[float]]]

    @model_validator(mode="after")
    def _dimensions_match(self) -> "MdpModelDocument":
        expected = (self.num_actions, self.num_states, self.num_states)
        for name in ("transitions", "rewards"):
            shape = np.shape(getattr(self, name))
            if shape != expected:
                raise ValueError(f"{name} has shape {shape}, expected {expected}")
        return self

    @classmethod
    def from_model(cls, model: MdpModel) -> "MdpModelDocument":
        return cls(
            num_states=model.num_states,
            num_actions=model.num_actions,
            discount=model.discount,
            terminal_states=sorted(model.terminal_states),
            transitions=model.transitions.tolist(),
            rewards=model.rewards.tolist(),
        )

    def to_model(self) -> MdpModel:
        return MdpModel(
            transitions=self.transitions,
            rewards=self.rewards,
            discount=self.discount,
            terminal_states=frozenset(self.terminal_states),
        )

    def to_text(self) -> str:
        """JSON text with every float written to 17 significant digits, one row per line."""

        def tensor(values: list[list[list[float]]]) -> str:
            blocks = []
            for matrix in values:
                rows = ",\n".join(
                    "      [" + ", ".join(format(x, FLOAT_FORMAT) for x in row) + "]"
                    for row in matrix
                )
                blocks.append("    [\n" + rows + "\n    ]")
            return "[\n" + ",\n".join(blocks) + "\n  ]"

        fields = [
            f'"version": {self.version}',
            f'"num_states": {self.num_states}',
            f'"num_actions": {self.num_actions}',
            f'"discount": {format(self.discount, FLOAT_FORMAT)}',
            f'"terminal_states": {json.dumps(self.terminal_states)}',
            f'"transitions": {tensor(self.transitions)}',
            f'"rewards": {tensor(self.rewards)}',
        ]
        return "{\n" + ",\n".join(f"  {field}" for field in fields) + "\n}\n"
