"""
Empirical models: seeded sampling from a true model, estimation from session logs,
synthetic log generation and model discrepancy.
"""

import logging

import numpy as np

from mdpreg.core.exceptions import ModelValidationError, NonAbsorbingChainError
from mdpreg.schemas.empirical import (
    CountsReport,
    ModelDistanceReport,
    RewardMode,
    SamplingConfig,
    Session,
    SessionLog,
    Step,
)
from mdpreg.schemas.mdp import MdpModel, Policy, StartWeights
from mdpreg.services.graph import unabsorbed_states
from mdpreg.services.mdp_algebra import expected_action_rewards
from mdpreg.services.rng import Stream, make_rng

logger = logging.getLogger(__name__)


def sample_transitions(
    true_model: MdpModel,
    cfg: SamplingConfig,
    stream: Stream = Stream.SAMPLING,
    index: int = 0,
) -> MdpModel:
    """
    Draw ``n`` next states for every non-terminal (state, action) pair and use the
    empirical frequencies as the transition rows. Terminal rows are copied.

    Rewards follow ``cfg.reward_mode``:
      - exact: copy the true rewards,
      - per-sample-noise: each observed entry is the mean of its per-sample rewards
        r + N(0, sigma^2), i.e. r + N(0, sigma^2 / count); unobserved entries are 0,
      - direct-noise: r + N(0, sigma^2) on every entry with positive true probability.
    """
    rng = make_rng(cfg.seed, stream, index)
    n = cfg.samples_per_state_action
    nonterminal = np.flatnonzero(true_model.nonterminal_mask)

    counts = rng.multinomial(n, true_model.transitions[:, nonterminal, :])
    transitions = np.array(true_model.transitions)
    transitions[:, nonterminal, :] = counts / n

    rewards = np.array(true_model.rewards)
    if cfg.reward_mode is not RewardMode.EXACT:
        noise = cfg.reward_noise_std * rng.standard_normal(counts.shape)
        true_rows = true_model.rewards[:, nonterminal, :]
        if cfg.reward_mode is RewardMode.PER_SAMPLE_NOISE:
            observed = counts > 0
            averaged = true_rows + noise / np.sqrt(np.maximum(counts, 1))
            rewards[:, nonterminal, :] = np.where(observed, averaged, 0.0)
        else:
            support = true_model.transitions[:, nonterminal, :] > 0.0
            rewards[:, nonterminal, :] = np.where(support, true_rows + noise, 0.0)

    return MdpModel(
        transitions=transitions,
        rewards=rewards,
        discount=true_model.discount,
        terminal_states=true_model.terminal_states,
    )


def _check_session(
    session: Session, position: int, num_states: int, num_actions: int, terminal_state: int
) -> None:
    state = session.start_state
    if state >= num_states:
        raise ModelValidationError(
            f"session {position}: start state {state} is not in [0, {num_states})"
        )
    for step in session.steps:
        if state == terminal_state:
            raise ModelValidationError(f"session {position}: step taken from the terminal state")
        if step.action >= num_actions:
            raise ModelValidationError(
                f"session {position}: action {step.action} is not in [0, {num_actions})"
            )
        if step.next_state >= num_states:
            raise ModelValidationError(
                f"session {position}: state {step.next_state} is not in [0, {num_states})"
            )
        state = step.next_state
    if not session.truncated and state != terminal_state:
        raise ModelValidationError(
            f"session {position}: END session stops at state {state}, "
            f"not the terminal state {terminal_state}"
        )


def estimate_from_logs(
    logs: SessionLog,
    num_states: int,
    num_actions: int,
    terminal_state: int | None = None,
    discount: float = 1.0,
) -> tuple[MdpModel, CountsReport]:
    """
    Count-based estimate: P^a_{st} = count(s, a, t) / count(s, a) and r^a_{st} the mean
    logged reward of (s, a, t). Non-terminal pairs never observed go to the terminal
    state with reward 0 and are listed in the counts report.
    """
    if num_states < 1 or num_actions < 1:
        raise ModelValidationError("num_states and num_actions must be positive")
    z = num_states - 1 if terminal_state is None else terminal_state
    if not 0 <= z < num_states:
        raise ModelValidationError(f"terminal state {z} is not in [0, {num_states})")

    origins, actions, targets, rewards = [], [], [], []
    for position, session in enumerate(logs.sessions):
        _check_session(session, position, num_states, num_actions, z)
        state = session.start_state
        for step in session.steps:
            origins.append(state)
            actions.append(step.action)
            targets.append(step.next_state)
            rewards.append(step.reward)
            state = step.next_state

    counts = np.zeros((num_actions, num_states, num_states))
    reward_sums = np.zeros_like(counts)
    index = (
        np.array(actions, dtype=int),
        np.array(origins, dtype=int),
        np.array(targets, dtype=int),
    )
    np.add.at(counts, index, 1.0)
    np.add.at(reward_sums, index, np.array(rewards, dtype=float))

    pair_counts = counts.sum(axis=2)
    observed = pair_counts > 0
    transitions = np.divide(
        counts,
        pair_counts[:, :, np.newaxis],
        out=np.zeros_like(counts),
        where=observed[:, :, np.newaxis],
    )
    estimated_rewards = np.divide(reward_sums, counts, out=np.zeros_like(counts), where=counts > 0)

    unobserved_mask = ~observed
    unobserved_mask[:, z] = False
    transitions[unobserved_mask, z] = 1.0
    transitions[:, z, :] = 0.0
    transitions[:, z, z] = 1.0
    estimated_rewards[:, z, :] = 0.0

    unobserved = [(int(s), int(a)) for a, s in zip(*np.nonzero(unobserved_mask))]
    unobserved.sort()
    if unobserved:
        logger.info("%d (state, action) pairs unobserved, routed to terminal", len(unobserved))

    if discount == 1.0:
        stuck = unabsorbed_states((transitions > 0.0).any(axis=0), frozenset({z}))
        if stuck.size:
            raise NonAbsorbingChainError(int(stuck[0]), "log estimate; pass --discount < 1")

    model = MdpModel(
        transitions=transitions,
        rewards=estimated_rewards,
        discount=discount,
        terminal_states=frozenset({z}),
    )
    report = CountsReport(
        num_states=num_states,
        num_actions=num_actions,
        terminal_state=z,
        num_sessions=len(logs.sessions),
        truncated_sessions=sum(session.truncated for session in logs.sessions),
        total_steps=len(origins),
        counts=pair_counts.T.astype(int).tolist(),
        unobserved=unobserved,
    )
    return model, report


def _draw_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` by inverting the cumulative distribution."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return (cdf <= u[:, np.newaxis]).sum(axis=1)


def generate_synthetic_logs(
    true_model: MdpModel,
    behavior: Policy,
    num_sessions: int,
    start_weights: StartWeights,
    max_steps: int,
    seed: int,
) -> SessionLog:
    """
    Roll out ``behavior`` on ``true_model`` from start states drawn proportionally to
    the non-terminal part of ``start_weights``. Sessions still running after
    ``max_steps`` steps are marked truncated. All sessions advance together, one step
    per round.
    """
    n = true_model.num_states
    if behavior.probs.shape != (n, true_model.num_actions):
        raise ModelValidationError("behavior policy shape does not match the model")
    if start_weights.weights.shape != (n,):
        raise ModelValidationError("start weights length does not match the model")
    if num_sessions < 0 or max_steps < 1:
        raise ModelValidationError("num_sessions must be >= 0 and max_steps >= 1")

    terminal = ~true_model.nonterminal_mask
    weights = np.where(terminal, 0.0, start_weights.weights)
    if not np.any(weights > 0.0):
        raise ModelValidationError("start weights put no mass on a non-terminal state")

    rng = make_rng(seed, Stream.SESSION_LOGS)
    starts = rng.choice(n, size=num_sessions, p=weights / weights.sum())
    states = starts.copy()
    active = np.ones(num_sessions, dtype=bool)
    steps: list[list[Step]] = [[] for _ in range(num_sessions)]

    for _ in range(max_steps):
        running = np.flatnonzero(active)
        if running.size == 0:
            break
        current = states[running]
        chosen = _draw_categorical(rng, behavior.probs[current])
        following = _draw_categorical(rng, true_model.transitions[chosen, current])
        gained = true_model.rewards[chosen, current, following]
        for session, a, r, t in zip(running, chosen, gained, following):
            steps[session].append(Step(action=int(a), reward=float(r), next_state=int(t)))
        states[running] = following
        active[running] = ~terminal[following]

    sessions = tuple(
        Session(start_state=int(start), steps=tuple(path), truncated=bool(still_running))
        for start, path, still_running in zip(starts, steps, active)
    )
    logger.debug(
        "generated %d sessions, %d truncated", num_sessions, int(np.count_nonzero(active))
    )
    return SessionLog(sessions=sessions)


def model_distance(m1: MdpModel, m2: MdpModel) -> ModelDistanceReport:
    """
    Row-wise discrepancy over (action, state) pairs whose state is non-terminal in
    both models.
    """
    if m1.transitions.shape != m2.transitions.shape:
        raise ModelValidationError(
            f"model shapes differ: {m1.transitions.shape} vs {m2.transitions.shape}"
        )
    states = m1.nonterminal_mask & m2.nonterminal_mask
    if not states.any():
        zeros = [0.0] * m1.num_actions
        return ModelDistanceReport(
            avg_row_l1_per_action=zeros, avg_row_l1=0.0, avg_tv=0.0, max_tv=0.0, reward_rmse=0.0
        )

    row_l1 = np.abs(m1.transitions - m2.transitions).sum(axis=2)[:, states]
    reward_gap = (expected_action_rewards(m1) - expected_action_rewards(m2))[states]
    avg_row_l1 = float(row_l1.mean())
    return ModelDistanceReport(
        avg_row_l1_per_action=row_l1.mean(axis=1).tolist(),
        avg_row_l1=avg_row_l1,
        avg_tv=avg_row_l1 / 2.0,
        max_tv=float(row_l1.max()) / 2.0,
        reward_rmse=float(np.sqrt(np.mean(reward_gap**2))),
    )
