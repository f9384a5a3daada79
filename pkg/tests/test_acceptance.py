"""
Statistical acceptance runs on the benchmark models.

These take minutes, not seconds; they are deselected by default (run with ``-m slow``).
Comparisons between grid points use paired per-trial differences: every grid point of a
sweep is scored on the same sampled models.
"""

import math

import numpy as np
import pytest
from scipy import stats

from mdpreg.schemas.empirical import RewardMode, SamplingConfig
from mdpreg.schemas.experiments import ExampleName, SweepConfig, SweepMethod
from mdpreg.schemas.mdp import PriorSpec, StartWeights
from mdpreg.schemas.solver import SolverConfig
from mdpreg.services.empirical import sample_transitions
from mdpreg.services.experiments import (
    evaluate_policy_suite,
    example1_model,
    example2_model,
    optimal_action_fraction,
    run_sample_scaling,
    run_sweep,
)
from mdpreg.services.solvers import (
    constant_policy,
    objective,
    policy_evaluation,
    solve_unregularized,
)

pytestmark = pytest.mark.slow

CFG = SolverConfig(tolerance=1e-10, max_iterations=100_000)


def _paired_gap(result, better: int, worse: int) -> tuple[float, float]:
    """Mean and standard error of per-trial differences between two grid points."""
    first = dict(zip(result.points[better].trial_indices, result.points[better].values))
    second = dict(zip(result.points[worse].trial_indices, result.points[worse].values))
    gaps = [first[t] - second[t] for t in sorted(first.keys() & second.keys())]
    return float(np.mean(gaps)), float(stats.sem(gaps, ddof=1))


def _best_index(result) -> int:
    return int(np.argmax([p.value_mean for p in result.points]))


class TestExample1:
    def test_value_iteration_matches_enumeration(self, brute_force_best):
        model = example1_model(10)
        e = StartWeights.nonterminal(model)
        policy = solve_unregularized(model, CFG).policy
        assert objective(model, policy, e) == pytest.approx(
            brute_force_best(model, e.weights), abs=1e-8
        )

    def test_unregularized_empirical_policy_often_wrong(self):
        model = example1_model(10)
        wrong = 0
        for seed in range(50):
            sampling = SamplingConfig(samples_per_state_action=100, seed=seed)
            empirical = sample_transitions(model, sampling)
            actions = solve_unregularized(empirical, CFG).policy.actions()[:9]
            wrong += bool(np.any(actions != 0))
        assert wrong > 25

    def test_l1_sweep_beats_unregularized_and_plateaus(self):
        cfg = SweepConfig(
            example=ExampleName.EXAMPLE1,
            num_states=10,
            method=SweepMethod.L1,
            lambdas=[0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0, 1000.0],
            samples_per_state_action=100,
            num_trials=50,
            base_seed=20240601,
            solver=CFG,
        )
        result = run_sweep(cfg)
        best = _best_index(result)
        assert result.points[best].grid_param > 0.0
        gap, stderr = _paired_gap(result, best, 0)
        assert gap >= 2.0 * stderr

        true_model = example1_model(10)
        forced = policy_evaluation(true_model, constant_policy(0, 10, 2)).per_state_mean()
        assert result.points[-1].value_mean == pytest.approx(forced, abs=1e-9)

    def test_relative_entropy_sweep_beats_uniform_prior(self):
        cfg = SweepConfig(
            example=ExampleName.EXAMPLE1,
            num_states=10,
            method=SweepMethod.RE,
            re_points=[(0.25, 0.5), (0.25, 0.9), (0.25, 0.999), (0.25, 1.0 - 1e-6)],
            samples_per_state_action=100,
            num_trials=50,
            base_seed=20240602,
            solver=CFG,
        )
        result = run_sweep(cfg)
        best = _best_index(result)
        assert best > 0
        gap, stderr = _paired_gap(result, best, 0)
        assert gap >= 2.0 * stderr

    def test_gap_shrinks_with_more_samples(self):
        cfg = SweepConfig(
            example=ExampleName.EXAMPLE1,
            num_states=10,
            method=SweepMethod.L1,
            lambdas=[0.1, 0.3, 1.0, 3.0, 10.0],
            sample_grid=[100, 10_000],
            num_trials=50,
            base_seed=20240603,
            solver=CFG,
        )
        small, large = run_sample_scaling(cfg).points
        combined = math.hypot(small.value_stderr, large.value_stderr)
        assert small.value_mean - large.value_mean >= 2.0 * combined

    def test_gap_vanishes_with_abundant_samples(self):
        cfg = SweepConfig(
            example=ExampleName.EXAMPLE1,
            num_states=10,
            method=SweepMethod.L1,
            lambdas=[0.1, 0.3, 1.0, 3.0, 10.0],
            sample_grid=[100_000],
            num_trials=50,
            base_seed=20240605,
            solver=CFG,
        )
        (point,) = run_sample_scaling(cfg).points
        assert abs(point.value_mean) <= max(2.0 * point.value_stderr, 1e-9)


class TestExample2:
    def test_action_zero_optimal_on_most_states(self):
        fractions = [
            optimal_action_fraction(example2_model(1000, seed), 0, CFG) for seed in range(20)
        ]
        assert 0.79 <= float(np.mean(fractions)) <= 0.86

    def test_noisy_rewards_mislead_the_unregularized_policy(self):
        # sensitivity check: one noise draw per entry instead of the per-sample average
        model = example2_model(1000, seed=7)
        misled = 0
        for seed in range(20):
            sampling = SamplingConfig(
                samples_per_state_action=100,
                reward_noise_std=1.5,
                reward_mode=RewardMode.DIRECT_NOISE,
                seed=seed,
            )
            empirical = sample_transitions(model, sampling)
            actions = solve_unregularized(empirical, CFG).policy.actions()
            misled += float(np.mean(actions[:999] == 1)) >= 0.25
        assert misled > 10

    def test_policy_suite_l1_row_beats_unregularized(self):
        model = example2_model(300, seed=11)
        prior = PriorSpec.single_action(300, 2, action=0)
        e = StartWeights.nonterminal(model)
        lambdas = [0.2, 0.5, 1.0]
        gains = []
        for seed in range(10):
            sampling = SamplingConfig(
                samples_per_state_action=100,
                reward_noise_std=1.5,
                reward_mode=RewardMode.PER_SAMPLE_NOISE,
                seed=seed,
            )
            empirical = sample_transitions(model, sampling)
            rows = evaluate_policy_suite(model, empirical, prior, e, lambdas=lambdas, cfg=CFG)
            by_name = {row.name: row.objective for row in rows}
            tuned = max(by_name[f"l1(lambda={lam:g})"] for lam in lambdas)
            gains.append(tuned - by_name["unregularized"])
        assert float(np.mean(gains)) >= 0.0

    def test_regularized_policies_beat_unregularized(self):
        common = {
            "example": ExampleName.EXAMPLE2,
            "num_states": 300,
            "model_seed": 11,
            "samples_per_state_action": 100,
            "reward_noise_std": 1.5,
            "reward_mode": RewardMode.PER_SAMPLE_NOISE,
            "num_trials": 30,
            "base_seed": 20240604,
            "solver": CFG,
        }
        l1 = run_sweep(
            SweepConfig(
                method=SweepMethod.L1,
                lambdas=[0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 100.0],
                **common,
            )
        )
        best = _best_index(l1)
        gap, stderr = _paired_gap(l1, best, 0)
        assert gap >= 2.0 * stderr
        assert l1.points[-1].value_mean < l1.points[best].value_mean

        re = run_sweep(
            SweepConfig(
                method=SweepMethod.RE,
                re_points=[
                    (0.1, 0.5),
                    (0.1, 0.9),
                    (0.1, 0.99),
                    (0.1, 0.999),
                    (0.1, 1.0 - 1e-8),
                ],
                **common,
            )
        )
        # both sweeps share trial seeds, so the unregularized trial values pair up
        unregularized = dict(zip(l1.points[0].trial_indices, l1.points[0].values))
        best_re = _best_index(re)
        tuned = dict(zip(re.points[best_re].trial_indices, re.points[best_re].values))
        gaps = [tuned[t] - unregularized[t] for t in sorted(tuned.keys() & unregularized.keys())]
        assert np.mean(gaps) >= 2.0 * stats.sem(gaps, ddof=1)
        assert re.points[-1].value_mean < re.points[best_re].value_mean
