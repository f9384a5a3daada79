"""
Solvers for tabular MDPs.

  - exact policy evaluation and discounted visitation counts (dense linear solves on
    the non-terminal block, terminal values pinned to 0),
  - hard-max value iteration, unregularized and with the L1 preferred-action penalty,
  - log-sum-exp (soft) value iteration with a relative-entropy prior or plain
    Shannon entropy,
  - one-shot and constant-action baselines.

Every function is pure; identical inputs give bit-identical reports.
"""

import logging

import numpy as np
from scipy import linalg
from scipy.special import entr, logsumexp, rel_entr, softmax

from mdpreg.core.exceptions import ConvergenceError, ModelValidationError
from mdpreg.schemas.mdp import MdpModel, Policy, PriorSpec, StartWeights, ValueFunction
from mdpreg.schemas.solver import SolveMethod, SolveReport, SolverConfig, TieBreak
from mdpreg.services.mdp_algebra import (
    expected_action_rewards,
    policy_reward,
    policy_transition,
    require_absorbing,
)

logger = logging.getLogger(__name__)

_RESIDUAL_FACTOR = 1e-8


# ── Linear solves ───────────────────────────────────────────────────────────


def _solve_checked(matrix: np.ndarray, rhs: np.ndarray, scale: float) -> np.ndarray:
    """Dense direct solve with one refinement step if the residual bound is missed."""
    if rhs.size == 0:
        return rhs.copy()
    limit = _RESIDUAL_FACTOR * (1.0 + scale)
    x = linalg.solve(matrix, rhs)
    residual = float(np.max(np.abs(matrix @ x - rhs)))
    if residual > limit:
        x = x + linalg.solve(matrix, rhs - matrix @ x)
        residual = float(np.max(np.abs(matrix @ x - rhs)))
    if residual > limit:
        raise ConvergenceError(f"linear solve residual {residual:.3g} exceeds {limit:.3g}")
    return x


def _evaluation_system(
    model: MdpModel, policy: Policy
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p_pi = policy_transition(model, policy)
    require_absorbing(model, p_pi, "policy evaluation")
    r_pi = policy_reward(model, policy)
    nonterminal = np.flatnonzero(model.nonterminal_mask)
    matrix = np.eye(nonterminal.size) - model.discount * p_pi[np.ix_(nonterminal, nonterminal)]
    return nonterminal, matrix, r_pi


def _check_weights(model: MdpModel, e: StartWeights) -> None:
    if e.weights.shape != (model.num_states,):
        raise ModelValidationError(
            f"start weights length {e.weights.size} does not match |S| = {model.num_states}"
        )


def policy_evaluation(model: MdpModel, policy: Policy) -> ValueFunction:
    """v^pi = (I - gamma P^pi)^{-1} r^pi on non-terminal states, 0 on terminal states."""
    nonterminal, matrix, r_pi = _evaluation_system(model, policy)
    values = np.zeros(model.num_states)
    values[nonterminal] = _solve_checked(
        matrix, r_pi[nonterminal], float(np.max(np.abs(r_pi), initial=0.0))
    )
    return ValueFunction(values=values, terminal_states=model.terminal_states)


def objective(model: MdpModel, policy: Policy, e: StartWeights) -> float:
    """e^T v^pi."""
    _check_weights(model, e)
    return float(e.weights @ policy_evaluation(model, policy).values)


def visitation(model: MdpModel, policy: Policy, e: StartWeights) -> np.ndarray:
    """
    Discounted visitation counts w^pi = (I - gamma P^pi)^{-T} e over non-terminal
    states. Terminal entries are reported as 0: they carry no reward, and at gamma = 1
    their visit count is unbounded.
    """
    _check_weights(model, e)
    nonterminal, matrix, _ = _evaluation_system(model, policy)
    counts = np.zeros(model.num_states)
    counts[nonterminal] = _solve_checked(
        matrix.T, e.weights[nonterminal], float(np.max(e.weights))
    )
    return counts


# ── Value iteration ─────────────────────────────────────────────────────────


def _resolve(cfg: SolverConfig | None) -> SolverConfig:
    return cfg if cfg is not None else SolverConfig.from_settings()


def _q_values(model: MdpModel, action_rewards: np.ndarray, values: np.ndarray) -> np.ndarray:
    return action_rewards + model.discount * (model.transitions @ values).T


def _backup(q: np.ndarray, kappa: float | None) -> np.ndarray:
    if kappa is None:
        return q.max(axis=1)
    return kappa * logsumexp(q / kappa, axis=1)


def _greedy_actions(
    q: np.ndarray, tie_break: TieBreak, preferred_mask: np.ndarray | None = None
) -> np.ndarray:
    """Argmax per row; exact ties go to preferred actions first, then to ``tie_break``."""
    candidates = q == q.max(axis=1, keepdims=True)
    if preferred_mask is not None:
        preferred = candidates & preferred_mask
        candidates = np.where(preferred.any(axis=1, keepdims=True), preferred, candidates)
    if tie_break is TieBreak.LOWEST_INDEX:
        return np.argmax(candidates, axis=1)
    return candidates.shape[1] - 1 - np.argmax(candidates[:, ::-1], axis=1)


def _value_iteration(
    model: MdpModel,
    action_rewards: np.ndarray,
    cfg: SolverConfig,
    method: SolveMethod,
    kappa: float | None = None,
    preferred_mask: np.ndarray | None = None,
) -> SolveReport:
    terminal = ~model.nonterminal_mask
    values = np.zeros(model.num_states)
    residual = float("inf")
    converged = False
    iterations = 0
    while iterations < cfg.max_iterations:
        iterations += 1
        updated = _backup(_q_values(model, action_rewards, values), kappa)
        updated[terminal] = 0.0
        if not np.all(np.isfinite(updated)):
            raise ConvergenceError(f"{method.value} value iteration diverged at sweep {iterations}")
        residual = float(np.max(np.abs(updated - values)))
        values = updated
        if residual <= cfg.tolerance:
            converged = True
            break

    if converged:
        logger.debug("%s converged: sweeps=%d residual=%.3g", method.value, iterations, residual)
    else:
        logger.warning(
            "%s did not converge in %d sweeps (residual %.3g > %.3g)",
            method.value,
            iterations,
            residual,
            cfg.tolerance,
        )

    q = _q_values(model, action_rewards, values)
    if kappa is None:
        actions = _greedy_actions(q, cfg.tie_break, preferred_mask)
        policy = Policy.deterministic(actions, model.num_actions)
        require_absorbing(model, policy_transition(model, policy), f"{method.value} policy")
    else:
        policy = Policy(probs=softmax(q / kappa, axis=1))

    return SolveReport(
        method=method,
        policy=policy,
        values=ValueFunction(values=values, terminal_states=model.terminal_states),
        iterations=iterations,
        final_residual=residual,
        converged=converged,
        config=cfg,
    )


def _check_prior(model: MdpModel, prior: PriorSpec) -> None:
    if (prior.num_states, prior.num_actions) != (model.num_states, model.num_actions):
        raise ModelValidationError(
            f"prior is sized for ({prior.num_states}, {prior.num_actions}), model is "
            f"({model.num_states}, {model.num_actions})"
        )


def penalized_action_rewards(model: MdpModel, prior: PriorSpec) -> np.ndarray:
    """r_s^a - lam for every non-preferred action of a non-terminal state."""
    _check_prior(model, prior)
    penalized = ~prior.preferred_mask() & model.nonterminal_mask[:, np.newaxis]
    return expected_action_rewards(model) - prior.lam * penalized


def prior_shifted_action_rewards(model: MdpModel, prior: PriorSpec) -> np.ndarray:
    """r_s^a + kappa log q_s^a."""
    _check_prior(model, prior)
    if prior.kappa is None or prior.prior_probs is None:
        raise ModelValidationError("relative-entropy prior needs both kappa and prior_probs")
    return expected_action_rewards(model) + prior.kappa * np.log(prior.prior_probs)


def solve_unregularized(model: MdpModel, cfg: SolverConfig | None = None) -> SolveReport:
    """v_s = max_a (r_s^a + gamma (P^a v)_s), greedy deterministic policy."""
    return _value_iteration(
        model, expected_action_rewards(model), _resolve(cfg), SolveMethod.VALUE_ITERATION
    )


def solve_l1(model: MdpModel, prior: PriorSpec, cfg: SolverConfig | None = None) -> SolveReport:
    """
    Value iteration after lowering the reward of every non-preferred action by lam.
    Returned values are those of the penalized rewards; preferred actions win exact ties.
    """
    return _value_iteration(
        model,
        penalized_action_rewards(model, prior),
        _resolve(cfg),
        SolveMethod.L1,
        preferred_mask=prior.preferred_mask(),
    )


def solve_re(model: MdpModel, prior: PriorSpec, cfg: SolverConfig | None = None) -> SolveReport:
    """
    Soft value iteration

        v_s = kappa logsumexp_a((r_s^a + kappa log q_s^a + gamma (P^a v)_s) / kappa)

    and the matching softmax policy.
    """
    action_rewards = prior_shifted_action_rewards(model, prior)
    return _value_iteration(
        model, action_rewards, _resolve(cfg), SolveMethod.RELATIVE_ENTROPY, kappa=prior.kappa
    )


def solve_shannon(
    model: MdpModel, kappa: float, cfg: SolverConfig | None = None
) -> SolveReport:
    """Shannon-entropy soft value iteration (no prior term)."""
    if kappa <= 0.0:
        raise ModelValidationError("kappa must be positive")
    return _value_iteration(
        model, expected_action_rewards(model), _resolve(cfg), SolveMethod.SHANNON, kappa=kappa
    )


def bellman_residual(
    model: MdpModel,
    values: ValueFunction,
    action_rewards: np.ndarray | None = None,
    kappa: float | None = None,
) -> float:
    """Max-norm change of one more hard (kappa None) or soft operator application."""
    if action_rewards is None:
        action_rewards = expected_action_rewards(model)
    updated = _backup(_q_values(model, action_rewards, values.values), kappa)
    updated[~model.nonterminal_mask] = 0.0
    return float(np.max(np.abs(updated - values.values)))


# ── Regularized objectives ──────────────────────────────────────────────────


def relative_entropy_objective(
    model: MdpModel, policy: Policy, prior: PriorSpec, e: StartWeights
) -> float:
    """sum_s w_s (r^pi_s - kappa h^pi_s) with h^pi_s = sum_a pi log(pi / q)."""
    _check_prior(model, prior)
    if prior.kappa is None or prior.prior_probs is None:
        raise ModelValidationError("relative-entropy prior needs both kappa and prior_probs")
    divergence = rel_entr(policy.probs, prior.prior_probs).sum(axis=1)
    counts = visitation(model, policy, e)
    return float(counts @ (policy_reward(model, policy) - prior.kappa * divergence))


def entropy_objective(
    model: MdpModel,
    policy: Policy,
    kappa: float,
    e: StartWeights,
    action_rewards: np.ndarray | None = None,
) -> float:
    """sum_s w_s (sum_a pi_s^a R_s^a + kappa H(pi_s)); R defaults to the expected rewards."""
    if action_rewards is None:
        action_rewards = expected_action_rewards(model)
    entropy = entr(policy.probs).sum(axis=1)
    mixed = np.einsum("sa,sa->s", policy.probs, action_rewards)
    return float(visitation(model, policy, e) @ (mixed + kappa * entropy))


# ── Baselines ───────────────────────────────────────────────────────────────


def one_shot_policy(model: MdpModel, tie_break: TieBreak = TieBreak.LOWEST_INDEX) -> Policy:
    """Per-state argmax of the immediate expected reward."""
    actions = _greedy_actions(expected_action_rewards(model), tie_break)
    return Policy.deterministic(actions, model.num_actions)


def one_shot_regularized(
    model: MdpModel, prior: PriorSpec, tie_break: TieBreak = TieBreak.LOWEST_INDEX
) -> Policy:
    """
    Picks a non-preferred action only when its reward minus lam strictly exceeds the
    best preferred reward; otherwise the best preferred action.
    """
    actions = _greedy_actions(
        penalized_action_rewards(model, prior), tie_break, prior.preferred_mask()
    )
    return Policy.deterministic(actions, model.num_actions)


def constant_policy(action: int, num_states: int, num_actions: int) -> Policy:
    if not 0 <= action < num_actions:
        raise ModelValidationError(f"action {action} is not in [0, {num_actions})")
    return Policy.deterministic(np.full(num_states, action), num_actions)


def policy_report(
    model: MdpModel, policy: Policy, method: SolveMethod, cfg: SolverConfig | None = None
) -> SolveReport:
    """Report for a policy obtained without iteration (baselines): exact values, 0 sweeps."""
    return SolveReport(
        method=method,
        policy=policy,
        values=policy_evaluation(model, policy),
        iterations=0,
        final_residual=0.0,
        converged=True,
        config=_resolve(cfg),
    )
