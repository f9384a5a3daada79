"""Shared model fixtures."""

import itertools

import numpy as np
import pytest

from mdpreg.schemas.mdp import MdpModel


@pytest.fixture
def chain_model() -> MdpModel:
    """States {0, 1, z=2}, one action: 0 -> 1 (reward 1), 1 -> z (reward 2), gamma 0.5."""
    transitions = np.zeros((1, 3, 3))
    rewards = np.zeros((1, 3, 3))
    transitions[0, 0, 1] = 1.0
    rewards[0, 0, 1] = 1.0
    transitions[0, 1, 2] = 1.0
    rewards[0, 1, 2] = 2.0
    transitions[0, 2, 2] = 1.0
    return MdpModel(
        transitions=transitions, rewards=rewards, discount=0.5, terminal_states=frozenset({2})
    )


@pytest.fixture
def delayed_model() -> MdpModel:
    """
    States {0, 1, z=2}, gamma 1. At 0, action 0 pays 1 and ends, action 1 pays 0 and
    moves to 1. At 1, action 0 pays 0 and ends, action 1 pays 5 and ends.
    """
    transitions = np.zeros((2, 3, 3))
    rewards = np.zeros((2, 3, 3))
    transitions[0, 0, 2] = 1.0
    rewards[0, 0, 2] = 1.0
    transitions[1, 0, 1] = 1.0
    transitions[0, 1, 2] = 1.0
    transitions[1, 1, 2] = 1.0
    rewards[1, 1, 2] = 5.0
    transitions[:, 2, 2] = 1.0
    return MdpModel(
        transitions=transitions, rewards=rewards, discount=1.0, terminal_states=frozenset({2})
    )


@pytest.fixture
def single_state_model():
    """Factory: one non-terminal state whose actions end the episode with the given rewards."""

    def build(action_rewards: list[float], discount: float = 0.0) -> MdpModel:
        num_actions = len(action_rewards)
        transitions = np.zeros((num_actions, 2, 2))
        rewards = np.zeros((num_actions, 2, 2))
        transitions[:, 0, 1] = 1.0
        transitions[:, 1, 1] = 1.0
        rewards[:, 0, 1] = action_rewards
        return MdpModel(
            transitions=transitions,
            rewards=rewards,
            discount=discount,
            terminal_states=frozenset({1}),
        )

    return build


@pytest.fixture
def random_model():
    """Factory: dense random model without terminal states (gamma < 1)."""

    def build(
        rng: np.random.Generator, num_states: int, num_actions: int, discount: float
    ) -> MdpModel:
        transitions = rng.dirichlet(np.ones(num_states), size=(num_actions, num_states))
        rewards = rng.uniform(0.0, 1.0, size=(num_actions, num_states, num_states))
        return MdpModel(transitions=transitions, rewards=rewards, discount=discount)

    return build


@pytest.fixture
def brute_force_best():
    """
    Factory: best objective over every deterministic policy, by direct linear solves on
    the non-terminal block.
    """

    def search(model: MdpModel, weights: np.ndarray) -> float:
        nonterminal = np.flatnonzero(model.nonterminal_mask)
        expected = np.einsum("ast,ast->sa", model.transitions, model.rewards)
        best = -np.inf
        for actions in itertools.product(range(model.num_actions), repeat=nonterminal.size):
            chosen = np.array(actions)
            p_pi = model.transitions[chosen, nonterminal][:, nonterminal]
            r_pi = expected[nonterminal, chosen]
            values = np.linalg.solve(np.eye(nonterminal.size) - model.discount * p_pi, r_pi)
            best = max(best, float(weights[nonterminal] @ values))
        return best

    return search
