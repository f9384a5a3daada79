"""
Policy-induced quantities of a tabular MDP.

All functions are pure: they read immutable models and policies and return fresh
arrays. Tensor layout follows ``MdpModel``: ``P[a, s, t]`` and ``r[a, s, t]``.
"""

import hashlib

import numpy as np

from mdpreg.core.exceptions import ModelValidationError, NonAbsorbingChainError
from mdpreg.schemas.mdp import MdpModel, Policy
from mdpreg.services.graph import unabsorbed_states


def _check_policy_shape(model: MdpModel, policy: Policy) -> None:
    expected = (model.num_states, model.num_actions)
    if policy.probs.shape != expected:
        raise ModelValidationError(
            f"policy shape {policy.probs.shape} does not match model (|S|, |A|) = {expected}"
        )


def expected_action_rewards(model: MdpModel) -> np.ndarray:
    """r_s^a = sum_t P^a_{st} r^a_{st}, shape (|S|, |A|)."""
    return np.einsum("ast,ast->sa", model.transitions, model.rewards)


def policy_transition(model: MdpModel, policy: Policy) -> np.ndarray:
    """P^pi_{st} = sum_a pi_s^a P^a_{st}, shape (|S|, |S|)."""
    _check_policy_shape(model, policy)
    return np.einsum("sa,ast->st", policy.probs, model.transitions)


def policy_reward(model: MdpModel, policy: Policy) -> np.ndarray:
    """r^pi_s = sum_a pi_s^a r_s^a, shape (|S|,)."""
    _check_policy_shape(model, policy)
    return np.einsum("sa,sa->s", policy.probs, expected_action_rewards(model))


def require_absorbing(model: MdpModel, p_pi: np.ndarray, context: str = "") -> None:
    """At gamma = 1, every state must reach a terminal state along the support of ``p_pi``."""
    if model.discount < 1.0:
        return
    stuck = unabsorbed_states(p_pi > 0.0, model.terminal_states)
    if stuck.size:
        raise NonAbsorbingChainError(int(stuck[0]), context)


def shift_action_rewards(model: MdpModel, offsets: np.ndarray) -> MdpModel:
    """
    Return a copy of ``model`` whose expected rewards are ``r_s^a + offsets[s, a]`` on
    non-terminal states. Terminal rows keep their zero reward.
    """
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (model.num_states, model.num_actions):
        raise ModelValidationError(
            f"offsets must have shape ({model.num_states}, {model.num_actions}), "
            f"got {offsets.shape}"
        )
    shift = offsets.T[:, :, np.newaxis] * model.nonterminal_mask[np.newaxis, :, np.newaxis]
    return MdpModel(
        transitions=model.transitions,
        rewards=model.rewards + shift,
        discount=model.discount,
        terminal_states=model.terminal_states,
    )


def model_hash(model: MdpModel) -> str:
    """Stable sha256 over shape, discount, terminal set and tensor bytes."""
    digest = hashlib.sha256()
    digest.update(repr((model.transitions.shape, model.discount)).encode())
    digest.update(repr(sorted(model.terminal_states)).encode())
    digest.update(np.ascontiguousarray(model.transitions, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(model.rewards, dtype="<f8").tobytes())
    return digest.hexdigest()
