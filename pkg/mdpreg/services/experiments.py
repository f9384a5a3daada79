"""
Benchmark models and multi-trial experiment runners.

Both benchmark families are rings of ``N - 1`` non-terminal states plus one terminal
state. Labels ``1..N`` of the ring map to storage indices ``0..N-1``: label ``i`` is
stored at ``i - 1`` and the terminal label ``N`` at ``N - 1``. From label ``i``:

  - action 0 continues to label ``N - 1 - (N - i) % (N - 1)`` (one step backwards,
    1 wraps to N - 1),
  - action 1 continues to label ``i % (N - 1) + 1`` (one step forwards, N - 1 wraps to 1),
  - every other outcome ends in the terminal state.

Example 2 draws its rewards once per state. Continuation and termination rewards are
N(6, 1) and N(3, 1) under action 0 and N(5, 1) and N(2, 1) under action 1, which makes
action 0 optimal on roughly 82% of the states. The other consistent reading keeps the
lower means on action 0 and instead gives action 1 the shorter, Example 1 style
continuation probabilities so that action 0 earns more through longer sessions. Only the
first reading is built here.

A sweep trains policies on sampled empirical models and scores them on the true model
(or on an independent holdout sample). Trials are keyed by index and seeded from
``(base_seed, trial)`` so the result does not depend on how trials are scheduled.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy import stats

from mdpreg.core.config import get_settings
from mdpreg.core.exceptions import ConvergenceError, MdpError, ModelValidationError
from mdpreg.schemas.empirical import SamplingConfig
from mdpreg.schemas.experiments import (
    EvaluationMetric,
    EvaluationModel,
    ExampleName,
    GridPointResult,
    HyperPoint,
    PolicySuiteRow,
    SweepConfig,
    SweepMethod,
    SweepResult,
)
from mdpreg.schemas.mdp import MdpModel, Policy, PriorSpec, StartWeights
from mdpreg.schemas.solver import SolverConfig
from mdpreg.services.empirical import sample_transitions
from mdpreg.services.mdp_algebra import model_hash
from mdpreg.services.rng import RNG_ALGORITHM, Stream, make_rng, trial_seed
from mdpreg.services.solvers import (
    constant_policy,
    objective,
    one_shot_policy,
    one_shot_regularized,
    policy_evaluation,
    solve_l1,
    solve_re,
    solve_unregularized,
)

logger = logging.getLogger(__name__)

# (continuation, terminal) probabilities per action
EXAMPLE1_PROBS = ((0.35, 0.65), (0.25, 0.75))
EXAMPLE2_PROBS = ((0.45, 0.55), (0.45, 0.55))
# (continuation, terminal) reward means per action
EXAMPLE2_REWARD_MEANS = ((6.0, 3.0), (5.0, 2.0))
EXAMPLE2_REWARD_STD = 1.0


# ── Benchmark models ────────────────────────────────────────────────────────


def _ring_targets(num_states: int) -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(1, num_states)
    backward = num_states - 1 - (num_states - labels) % (num_states - 1)
    forward = labels % (num_states - 1) + 1
    return backward - 1, forward - 1


def _ring_model(
    num_states: int,
    probs: tuple[tuple[float, float], ...],
    continuation_rewards: np.ndarray,
    terminal_rewards: np.ndarray,
) -> MdpModel:
    if num_states < 3:
        raise ModelValidationError(f"ring models need N >= 3, got {num_states}")
    z = num_states - 1
    rows = np.arange(z)
    transitions = np.zeros((2, num_states, num_states))
    rewards = np.zeros_like(transitions)
    for action, target in enumerate(_ring_targets(num_states)):
        keep, leave = probs[action]
        transitions[action, rows, target] = keep
        transitions[action, rows, z] = leave
        rewards[action, rows, target] = continuation_rewards[action]
        rewards[action, rows, z] = terminal_rewards[action]
    transitions[:, z, z] = 1.0
    return MdpModel(
        transitions=transitions, rewards=rewards, discount=1.0, terminal_states=frozenset({z})
    )


def example1_model(num_states: int = 10) -> MdpModel:
    """Ring with known rewards 2i + N on continuation and i + N on termination."""
    labels = np.arange(1, num_states, dtype=float)
    continuation = np.tile(2.0 * labels + num_states, (2, 1))
    terminal = np.tile(labels + num_states, (2, 1))
    return _ring_model(num_states, EXAMPLE1_PROBS, continuation, terminal)


def example2_model(num_states: int = 1000, seed: int = 0) -> MdpModel:
    """
    Ring with rewards drawn once from unit-variance Gaussians. Draws are taken in the
    fixed order [action][continuation, terminal][state] from the model-generation stream.
    """
    if num_states < 3:
        raise ModelValidationError(f"ring models need N >= 3, got {num_states}")
    rng = make_rng(seed, Stream.MODEL_GENERATION)
    draws = rng.standard_normal((2, 2, num_states - 1))
    means = np.asarray(EXAMPLE2_REWARD_MEANS)[:, :, np.newaxis]
    rewards = means + EXAMPLE2_REWARD_STD * draws
    return _ring_model(num_states, EXAMPLE2_PROBS, rewards[:, 0], rewards[:, 1])


def optimal_action_fraction(
    model: MdpModel, action: int, cfg: SolverConfig | None = None
) -> float:
    """Share of non-terminal states whose optimal action is ``action``."""
    report = solve_unregularized(model, cfg)
    chosen = report.policy.actions()[model.nonterminal_mask]
    return float(np.mean(chosen == action)) if chosen.size else 0.0


# ── Policy learning and scoring ─────────────────────────────────────────────


def learn_policy(
    model: MdpModel,
    method: SweepMethod,
    point: HyperPoint,
    preferred_action: int,
    cfg: SolverConfig | None = None,
) -> Policy:
    """Fit one regularized policy on ``model``; a non-converged solve is an error."""
    s, a = model.num_states, model.num_actions
    if method is SweepMethod.RE:
        prior = PriorSpec.single_action(
            s, a, preferred_action, kappa=point.kappa, q_preferred=point.q_preferred
        )
        report = solve_re(model, prior, cfg)
    else:
        prior = PriorSpec.single_action(s, a, preferred_action, lam=point.lam or 0.0)
        if method is SweepMethod.OSP_REG:
            return one_shot_regularized(model, prior)
        report = solve_l1(model, prior, cfg)
    if not report.converged:
        raise ConvergenceError(
            f"{method.value} solve stopped after {report.iterations} sweeps "
            f"(residual {report.final_residual:.3g})"
        )
    return report.policy


def _score(
    model: MdpModel,
    policy: Policy,
    metric: EvaluationMetric,
    weights: StartWeights | None,
) -> float:
    if metric is EvaluationMetric.WEIGHTED_OBJECTIVE:
        return objective(model, policy, weights)
    return policy_evaluation(model, policy).per_state_mean()


def _preferred_mass(model: MdpModel, policy: Policy, action: int) -> float:
    return float(policy.probs[model.nonterminal_mask, action].mean())


def _grid_param(method: SweepMethod, point: HyperPoint, num_actions: int) -> float:
    if method is not SweepMethod.RE:
        return float(point.lam)
    if num_actions == 1:
        return float(point.q_preferred)
    return (1.0 - point.q_preferred) / (num_actions - 1)


# ── Sweeps ──────────────────────────────────────────────────────────────────


@dataclass
class _TrialOutcome:
    trial: int
    training_hash: str | None = None
    evaluation_hash: str | None = None
    values: dict[int, float] = field(default_factory=dict)
    preferred: dict[int, float] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)


def _resolve_model(cfg: SweepConfig, true_model: MdpModel | None) -> MdpModel:
    if true_model is not None:
        return true_model
    if cfg.example is ExampleName.EXAMPLE1:
        return example1_model(cfg.num_states)
    if cfg.example is ExampleName.EXAMPLE2:
        return example2_model(cfg.num_states, cfg.model_seed)
    raise ModelValidationError("a custom sweep needs the true model to be supplied")


def _run_trial(
    cfg: SweepConfig,
    true_model: MdpModel,
    weights: StartWeights | None,
    points: list[HyperPoint],
    trial: int,
) -> _TrialOutcome:
    outcome = _TrialOutcome(trial=trial)
    sampling = SamplingConfig(
        samples_per_state_action=cfg.samples_per_state_action,
        reward_noise_std=cfg.reward_noise_std,
        seed=trial_seed(cfg.base_seed, trial),
        reward_mode=cfg.reward_mode,
    )
    try:
        training = sample_transitions(true_model, sampling)
        if cfg.evaluation_model is EvaluationModel.HOLDOUT:
            evaluation = sample_transitions(true_model, sampling, Stream.HOLDOUT)
        else:
            evaluation = true_model
    except (MdpError, ValidationError) as exc:
        logger.warning("trial %d: sampling failed: %s", trial, exc)
        outcome.failures = {k: str(exc) for k in range(len(points))}
        return outcome

    outcome.training_hash = model_hash(training)
    outcome.evaluation_hash = model_hash(evaluation)
    if (
        cfg.evaluation_model is EvaluationModel.HOLDOUT
        and outcome.training_hash == outcome.evaluation_hash
    ):
        logger.warning("trial %d: holdout sample coincides with the training sample", trial)

    for k, point in enumerate(points):
        try:
            policy = learn_policy(training, cfg.method, point, cfg.preferred_action, cfg.solver)
            outcome.values[k] = _score(evaluation, policy, cfg.evaluation, weights)
            outcome.preferred[k] = _preferred_mass(evaluation, policy, cfg.preferred_action)
        except (MdpError, ValidationError) as exc:
            logger.warning("trial %d, %s: %s", trial, point, exc)
            outcome.failures[k] = str(exc)
    return outcome


def _run_trials(
    cfg: SweepConfig,
    true_model: MdpModel,
    weights: StartWeights | None,
    points: list[HyperPoint],
) -> list[_TrialOutcome]:
    if cfg.evaluation is EvaluationMetric.WEIGHTED_OBJECTIVE and weights is None:
        raise ModelValidationError("weighted_objective evaluation needs start weights")
    run = partial(_run_trial, cfg, true_model, weights, points)
    with ThreadPoolExecutor(max_workers=get_settings().SWEEP_WORKERS) as pool:
        outcomes = list(pool.map(run, range(cfg.num_trials)))
    return sorted(outcomes, key=lambda outcome: outcome.trial)


def _mean_and_stderr(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    if len(values) == 1:
        return float(values[0]), float("nan")
    return float(np.mean(values)), float(stats.sem(values, ddof=1))


def _metric_name(cfg: SweepConfig) -> str:
    return cfg.evaluation.value


def run_sweep(
    cfg: SweepConfig,
    true_model: MdpModel | None = None,
    weights: StartWeights | None = None,
) -> SweepResult:
    """Mean and standard error of the evaluation metric at every grid point."""
    true_model = _resolve_model(cfg, true_model)
    points = cfg.hyper_points()
    outcomes = _run_trials(cfg, true_model, weights, points)

    results = []
    for k, point in enumerate(points):
        succeeded = [o for o in outcomes if k in o.values]
        values = [o.values[k] for o in succeeded]
        mean, stderr = _mean_and_stderr(values)
        grid_param = _grid_param(cfg.method, point, true_model.num_actions)
        results.append(
            GridPointResult(
                grid_param=grid_param,
                point=point,
                value_mean=mean,
                value_stderr=stderr,
                trials=len(values),
                failed_trials=len(outcomes) - len(values),
                preferred_fraction=(
                    float(np.mean([o.preferred[k] for o in succeeded]))
                    if succeeded
                    else float("nan")
                ),
                neg_log_q=-math.log(grid_param) if cfg.method is SweepMethod.RE else None,
                trial_indices=[o.trial for o in succeeded],
                values=values,
            )
        )
        logger.info(
            "%s %g: mean=%.6g stderr=%.3g trials=%d failed=%d",
            cfg.method.value,
            grid_param,
            mean,
            stderr,
            len(values),
            len(outcomes) - len(values),
        )

    return SweepResult(
        config=cfg,
        metric_name=_metric_name(cfg),
        grid_param_name="q_nonpreferred" if cfg.method is SweepMethod.RE else "lambda",
        points=results,
        rng_algorithm=RNG_ALGORITHM,
        true_model_hash=model_hash(true_model),
        training_model_hashes=[o.training_hash for o in outcomes],
        evaluation_model_hashes=[o.evaluation_hash for o in outcomes],
    )


def _reference_point(cfg: SweepConfig, num_actions: int) -> HyperPoint:
    """The unregularized counterpart: lam = 0, or a uniform prior at the first kappa."""
    if cfg.method is not SweepMethod.RE:
        return HyperPoint(lam=0.0)
    if num_actions < 2:
        raise ModelValidationError("a relative-entropy reference needs at least two actions")
    return HyperPoint(kappa=cfg.re_points[0][0], q_preferred=1.0 / num_actions)


def run_sample_scaling(
    cfg: SweepConfig,
    true_model: MdpModel | None = None,
    weights: StartWeights | None = None,
) -> SweepResult:
    """
    Regularization gap per sample count: for each n in ``cfg.sample_grid`` the grid
    point with the best mean metric is compared with the unregularized reference,
    trial by trial, and the paired differences are aggregated.
    """
    true_model = _resolve_model(cfg, true_model)
    reference = _reference_point(cfg, true_model.num_actions)
    points = cfg.hyper_points()
    if reference not in points:
        points = [reference, *points]
    ref = points.index(reference)
    if len(points) < 2:
        raise ModelValidationError("sample scaling needs at least one regularized grid point")

    results = []
    training_hashes: list[str | None] = []
    evaluation_hashes: list[str | None] = []
    for n in cfg.sample_grid:
        scaled = cfg.model_copy(update={"samples_per_state_action": n})
        outcomes = _run_trials(scaled, true_model, weights, points)
        training_hashes.extend(o.training_hash for o in outcomes)
        evaluation_hashes.extend(o.evaluation_hash for o in outcomes)

        means = {
            k: float(np.mean([o.values[k] for o in outcomes if k in o.values]))
            for k in range(len(points))
            if k != ref and any(k in o.values for o in outcomes)
        }
        if not means:
            raise ConvergenceError(f"n={n}: every regularized trial failed")
        best = max(means, key=means.__getitem__)
        paired = [o for o in outcomes if best in o.values and ref in o.values]
        gaps = [o.values[best] - o.values[ref] for o in paired]
        mean, stderr = _mean_and_stderr(gaps)
        results.append(
            GridPointResult(
                grid_param=float(n),
                point=points[best],
                value_mean=mean,
                value_stderr=stderr,
                trials=len(gaps),
                failed_trials=len(outcomes) - len(gaps),
                preferred_fraction=(
                    float(np.mean([o.preferred[best] for o in paired])) if paired else float("nan")
                ),
                best_param=_grid_param(cfg.method, points[best], true_model.num_actions),
                trial_indices=[o.trial for o in paired],
                values=gaps,
            )
        )
        logger.info("n=%d: gap=%.6g stderr=%.3g trials=%d", n, mean, stderr, len(gaps))

    return SweepResult(
        config=cfg,
        metric_name=f"{_metric_name(cfg)}_gap",
        grid_param_name="samples",
        points=results,
        rng_algorithm=RNG_ALGORITHM,
        true_model_hash=model_hash(true_model),
        training_model_hashes=training_hashes,
        evaluation_model_hashes=evaluation_hashes,
    )


def sweep_summary_frame(result: SweepResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "grid_param": [p.grid_param for p in result.points],
            "value_mean": [p.value_mean for p in result.points],
            "value_stderr": [p.value_stderr for p in result.points],
            "trials": [p.trials for p in result.points],
            "metric_name": result.metric_name,
        }
    )


def sweep_raw_frame(result: SweepResult) -> pd.DataFrame:
    rows = [
        {"trial": trial, "grid_param": p.grid_param, "value": value}
        for p in result.points
        for trial, value in zip(p.trial_indices, p.values)
    ]
    return pd.DataFrame(rows, columns=["trial", "grid_param", "value"])


# ── Policy comparison ───────────────────────────────────────────────────────


def evaluate_policy_suite(
    true_model: MdpModel,
    empirical_model: MdpModel,
    prior: PriorSpec,
    e: StartWeights,
    lambdas: list[float] | None = None,
    reference: str = "unregularized",
    cfg: SolverConfig | None = None,
) -> list[PolicySuiteRow]:
    """
    Learn every baseline and regularized policy on ``empirical_model``, score each by
    its objective on ``true_model`` and rank them. Improvement is relative to the row
    named ``reference``.
    """
    lambdas = [prior.lam] if lambdas is None else lambdas
    candidates: list[tuple[str, str, float | None, Policy]] = [
        ("unregularized", "vi", None, solve_unregularized(empirical_model, cfg).policy),
        ("osp", "osp", None, one_shot_policy(empirical_model)),
    ]
    for lam in lambdas:
        penalized = prior.model_copy(update={"lam": lam})
        policy = one_shot_regularized(empirical_model, penalized)
        candidates.append((f"osp-reg(lambda={lam:g})", "osp-reg", lam, policy))
    for action in range(empirical_model.num_actions):
        candidates.append(
            (
                f"const-{action}",
                "const",
                None,
                constant_policy(action, empirical_model.num_states, empirical_model.num_actions),
            )
        )
    for lam in lambdas:
        penalized = prior.model_copy(update={"lam": lam})
        candidates.append(
            (f"l1(lambda={lam:g})", "l1", lam, solve_l1(empirical_model, penalized, cfg).policy)
        )
    if prior.kappa is not None and prior.prior_probs is not None:
        candidates.append(("re", "re", None, solve_re(empirical_model, prior, cfg).policy))

    scored = []
    for name, method, lam, policy in candidates:
        try:
            scored.append((name, method, lam, objective(true_model, policy, e)))
        except MdpError as exc:
            logger.warning("skipping %s: %s", name, exc)

    baseline = {name: value for name, _, _, value in scored}.get(reference)
    if baseline is None:
        raise ModelValidationError(f"reference policy {reference!r} is not in the suite")

    ranked = sorted(scored, key=lambda row: -row[3])
    return [
        PolicySuiteRow(
            name=name,
            method=method,
            lam=lam,
            objective=value,
            improvement_pct=(
                100.0 * (value - baseline) / abs(baseline) if baseline != 0.0 else float("nan")
            ),
            rank=rank,
        )
        for rank, (name, method, lam, value) in enumerate(ranked, start=1)
    ]


def policy_suite_frame(rows: list[PolicySuiteRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [row.model_dump() for row in rows],
        columns=["rank", "name", "method", "lam", "objective", "improvement_pct"],
    )
