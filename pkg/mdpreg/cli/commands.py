"""
Command-line sub-commands.

Commands:
  gen       write an Example 1 or Example 2 model
  sample    draw an empirical model from a true model
  ingest    estimate a model (and counts report) from a session log
  simulate  roll out a policy and write a synthetic session log
  solve     solve a model with any method and write the report
  eval      print a policy's objective and value per state
  sweep     run a multi-trial sweep and write CSV/JSON artifacts
  compare   rank baseline and regularized policies on a true model
  distance  print the discrepancy between two models

Every handler only merges options, calls the service layer and persists through the
unit of work. ``run_command`` maps exceptions to exit codes.
"""

import argparse
import json
import logging
import sys
from collections.abc import Callable
from typing import Any

from pydantic import BaseModel, ValidationError

from mdpreg.core.exceptions import ConvergenceError, MdpError, ModelValidationError
from mdpreg.schemas.empirical import RewardMode, SamplingConfig
from mdpreg.schemas.experiments import (
    EvaluationMetric,
    EvaluationModel,
    ExampleName,
    SweepMethod,
)
from mdpreg.schemas.mdp import MdpModel, PriorSpec, StartWeights
from mdpreg.schemas.run_config import (
    CompareOptions,
    DistanceOptions,
    EvalOptions,
    GenOptions,
    IngestOptions,
    SampleOptions,
    SimulateOptions,
    SolveOptions,
    SweepOptions,
)
from mdpreg.schemas.solver import SolveMethod, SolveReport, SolverConfig, TieBreak
from mdpreg.services.empirical import (
    estimate_from_logs,
    generate_synthetic_logs,
    model_distance,
    sample_transitions,
)
from mdpreg.services.experiments import (
    evaluate_policy_suite,
    example1_model,
    example2_model,
    policy_suite_frame,
    run_sample_scaling,
    run_sweep,
    sweep_summary_frame,
)
from mdpreg.services.solvers import (
    constant_policy,
    objective,
    one_shot_policy,
    one_shot_regularized,
    policy_evaluation,
    policy_report,
    solve_l1,
    solve_re,
    solve_shannon,
    solve_unregularized,
)
from mdpreg.services.unit_of_work import ArtifactUnitOfWork

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
_META_KEYS = {"command", "config", "log_level", "handler", "parser"}
GEN_EXAMPLES = (ExampleName.EXAMPLE1.value, ExampleName.EXAMPLE2.value)


class UsageError(MdpError):
    """Bad or missing command-line arguments."""

    exit_code = 1


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ── Option merging ──────────────────────────────────────────────────────────


def _merged_options(args: argparse.Namespace) -> dict[str, Any]:
    """Config-file section for the command, overridden by the flags actually given."""
    section: dict[str, Any] = {}
    if args.config is not None:
        with ArtifactUnitOfWork() as uow:
            section = uow.load_run_config(args.config).section(args.command)
    section.update({k: v for k, v in vars(args).items() if k not in _META_KEYS})
    return section


def _options(args: argparse.Namespace, options: type[BaseModel]) -> Any:
    return options.model_validate(_merged_options(args))


def _require(value: Any, flag: str, context: str) -> Any:
    if value is None:
        raise UsageError(f"{context} needs {flag}")
    return value


def _start_weights(uow: ArtifactUnitOfWork, source: str, model: MdpModel) -> StartWeights:
    weights = (
        StartWeights.uniform(model.num_states) if source == "uniform" else uow.load_weights(source)
    )
    if weights.weights.shape != (model.num_states,):
        raise ModelValidationError(
            f"start weights have {weights.weights.size} entries, "
            f"model has {model.num_states} states"
        )
    return weights


# ── Handlers ────────────────────────────────────────────────────────────────


def cmd_gen(args: argparse.Namespace) -> int:
    merged = _merged_options(args)
    if merged.get("example") not in GEN_EXAMPLES:
        raise UsageError(
            f"gen: unknown example {merged.get('example')!r}, expected example1 or example2"
        )
    opts = GenOptions.model_validate(merged)
    if opts.example == ExampleName.EXAMPLE1.value:
        model = example1_model(opts.n or 10)
    else:
        seed = _require(opts.seed, "--seed", "gen example2")
        model = example2_model(opts.n or 1000, seed)
    with ArtifactUnitOfWork() as uow:
        uow.save_model(opts.out, model)
        uow.commit()
    print(f"wrote {opts.out}: {model!r}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    opts: SampleOptions = _options(args, SampleOptions)
    cfg = SamplingConfig(
        samples_per_state_action=opts.n_samples,
        reward_noise_std=opts.noise_std,
        seed=_require(opts.seed, "--seed", "sample"),
        reward_mode=opts.reward_mode,
    )
    with ArtifactUnitOfWork() as uow:
        true_model = uow.load_model(opts.model)
        model = sample_transitions(true_model, cfg)
        uow.save_model(opts.out, model)
        uow.commit()
    distance = model_distance(model, true_model)
    print(f"wrote {opts.out}: avg_tv={distance.avg_tv:.6g} max_tv={distance.max_tv:.6g}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    opts: IngestOptions = _options(args, IngestOptions)
    counts_out = opts.counts_out or opts.out.with_suffix(".counts.json")
    with ArtifactUnitOfWork() as uow:
        logs = uow.load_session_log(opts.log)
        model, counts = estimate_from_logs(
            logs, opts.num_states, opts.num_actions, opts.terminal_state, opts.discount
        )
        uow.save_model(opts.out, model)
        uow.save_counts_report(counts_out, counts)
        uow.commit()
    print(
        json.dumps(
            {
                "model": str(opts.out),
                "counts": str(counts_out),
                "sessions": counts.num_sessions,
                "steps": counts.total_steps,
                "unobserved_pairs": len(counts.unobserved),
            }
        )
    )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    opts: SimulateOptions = _options(args, SimulateOptions)
    seed = _require(opts.seed, "--seed", "simulate")
    with ArtifactUnitOfWork() as uow:
        model = uow.load_model(opts.model)
        behavior = uow.load_policy(opts.policy)
        weights = _start_weights(uow, opts.weights, model)
        logs = generate_synthetic_logs(
            model, behavior, opts.num_sessions, weights, opts.max_steps, seed
        )
        uow.save_session_log(opts.out, logs)
        uow.commit()
    truncated = sum(session.truncated for session in logs.sessions)
    print(f"wrote {len(logs.sessions)} sessions ({truncated} truncated) to {opts.out}")
    return 0


def _solver_config(opts: SolveOptions) -> SolverConfig:
    overrides = {
        "tolerance": opts.tolerance,
        "max_iterations": opts.max_iterations,
        "tie_break": opts.tie_break,
    }
    base = SolverConfig.from_settings().model_dump()
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SolverConfig.model_validate(base)


def _solve(
    model: MdpModel, opts: SolveOptions, cfg: SolverConfig
) -> tuple[SolveReport, dict[str, float | int | None] | None]:
    s, a, method = model.num_states, model.num_actions, opts.method
    context = f"--method {method.value}"
    echo = {
        "lambda": opts.lam,
        "kappa": opts.kappa,
        "q_preferred": opts.q_pref,
        "preferred_action": opts.pref_action,
    }

    if method is SolveMethod.VALUE_ITERATION:
        return solve_unregularized(model, cfg), None
    if method is SolveMethod.L1:
        lam = _require(opts.lam, "--lambda", context)
        return solve_l1(model, PriorSpec.single_action(s, a, opts.pref_action, lam=lam), cfg), echo
    if method is SolveMethod.RELATIVE_ENTROPY:
        prior = PriorSpec.single_action(
            s,
            a,
            opts.pref_action,
            kappa=_require(opts.kappa, "--kappa", context),
            q_preferred=_require(opts.q_pref, "--q-pref", context),
        )
        return solve_re(model, prior, cfg), echo
    if method is SolveMethod.SHANNON:
        return solve_shannon(model, _require(opts.kappa, "--kappa", context), cfg), echo

    if method is SolveMethod.ONE_SHOT:
        policy = one_shot_policy(model, cfg.tie_break)
    elif method is SolveMethod.ONE_SHOT_REGULARIZED:
        lam = _require(opts.lam, "--lambda", context)
        prior = PriorSpec.single_action(s, a, opts.pref_action, lam=lam)
        policy = one_shot_regularized(model, prior, cfg.tie_break)
    else:
        policy = constant_policy(_require(opts.action, "--action", context), s, a)
    return policy_report(model, policy, method, cfg), echo


def cmd_solve(args: argparse.Namespace) -> int:
    opts: SolveOptions = _options(args, SolveOptions)
    cfg = _solver_config(opts)
    with ArtifactUnitOfWork() as uow:
        model = uow.load_model(opts.model)
        report, prior = _solve(model, opts, cfg)
        if opts.out is not None:
            uow.save_report(opts.out, report, prior)
            uow.commit()
    print(
        json.dumps(
            {
                "method": report.method.value,
                "converged": report.converged,
                "iterations": report.iterations,
                "final_residual": report.final_residual,
                "value_per_state": report.values.per_state_mean(),
                "actions": report.policy.actions().tolist(),
            }
        )
    )
    if not report.converged:
        logger.error(
            "%s did not converge within %d sweeps", report.method.value, report.iterations
        )
        return ConvergenceError.exit_code
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    opts: EvalOptions = _options(args, EvalOptions)
    with ArtifactUnitOfWork() as uow:
        model = uow.load_model(opts.model)
        policy = uow.load_policy(opts.policy)
        weights = _start_weights(uow, opts.weights, model)
    values = policy_evaluation(model, policy)
    print(
        json.dumps(
            {
                "objective": objective(model, policy, weights),
                "value_per_state": values.per_state_mean(),
            }
        )
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    merged = _merged_options(args)
    if "base_seed" not in merged:
        raise UsageError("sweep needs an explicit --base-seed")
    if merged.get("example") == ExampleName.EXAMPLE2.value and "model_seed" not in merged:
        raise UsageError("an example2 sweep needs an explicit --model-seed")
    opts = SweepOptions.model_validate(merged)
    cfg = opts.sweep_config()

    with ArtifactUnitOfWork() as uow:
        true_model = None
        if cfg.example is ExampleName.CUSTOM:
            true_model = uow.load_model(_require(cfg.model_path, "--model-path", "custom sweep"))
        weights = None
        if cfg.evaluation is EvaluationMetric.WEIGHTED_OBJECTIVE:
            weights = uow.load_weights(
                _require(cfg.weights_path, "--weights-path", "weighted_objective evaluation")
            )
        runner = run_sample_scaling if opts.scaling else run_sweep
        result = runner(cfg, true_model, weights)
        uow.write_sweep_result(result, opts.out_dir)
        uow.commit()
    print(sweep_summary_frame(result).to_string(index=False))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    opts: CompareOptions = _options(args, CompareOptions)
    with ArtifactUnitOfWork() as uow:
        true_model = uow.load_model(opts.true_model)
        empirical_model = uow.load_model(opts.empirical_model)
        weights = _start_weights(uow, opts.weights, true_model)
        prior = PriorSpec.single_action(
            true_model.num_states,
            true_model.num_actions,
            opts.pref_action,
            lam=opts.lambdas[0] if opts.lambdas else 0.0,
            kappa=opts.kappa,
            q_preferred=opts.q_pref,
        )
        rows = evaluate_policy_suite(
            true_model, empirical_model, prior, weights, opts.lambdas, opts.reference
        )
        if opts.out is not None:
            uow.write_policy_suite(opts.out, rows)
            uow.commit()
    print(policy_suite_frame(rows).to_string(index=False))
    return 0


def cmd_distance(args: argparse.Namespace) -> int:
    opts: DistanceOptions = _options(args, DistanceOptions)
    with ArtifactUnitOfWork() as uow:
        report = model_distance(uow.load_model(opts.model_a), uow.load_model(opts.model_b))
        if opts.out is not None:
            uow.save_distance_report(opts.out, report)
            uow.commit()
    print(report.model_dump_json(indent=2))
    return 0


# ── Parser ──────────────────────────────────────────────────────────────────


def _float_list(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _int_list(text: str) -> list[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def _pair_list(text: str) -> list[tuple[float, float]]:
    """``"0.25:0.5,0.25:0.9"`` -> [(0.25, 0.5), (0.25, 0.9)]."""
    pairs = []
    for item in text.split(","):
        if item.strip():
            kappa, q = item.split(":")
            pairs.append((float(kappa), float(q)))
    return pairs


def _add(parser: argparse.ArgumentParser, *flags: str, **kwargs: Any) -> None:
    """Flags default to 'absent' so that only given flags override the config file."""
    parser.add_argument(*flags, default=argparse.SUPPRESS, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run configuration file (JSON)")
    common.add_argument("--log-level", default=None, choices=LOG_LEVELS)

    parser = _ArgumentParser(
        prog="mdpreg",
        description="Regularized solvers and experiments for empirical tabular MDPs.",
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def command(name: str, handler: Callable[[argparse.Namespace], int], help_text: str):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.set_defaults(handler=handler, parser=sub)
        return sub

    gen = command("gen", cmd_gen, "write a benchmark model")
    _add(gen, "example", nargs="?", help="example1 or example2")
    _add(gen, "--n", type=int, help="number of states N, terminal included")
    _add(gen, "--seed", type=int)
    _add(gen, "--out")

    sample = command("sample", cmd_sample, "draw an empirical model")
    _add(sample, "--model")
    _add(sample, "--n-samples", type=int, help="samples per (state, action)")
    _add(sample, "--noise-std", type=float)
    _add(sample, "--reward-mode", choices=[mode.value for mode in RewardMode])
    _add(sample, "--seed", type=int)
    _add(sample, "--out")

    ingest = command("ingest", cmd_ingest, "estimate a model from a session log")
    _add(ingest, "--log")
    _add(ingest, "--num-states", type=int)
    _add(ingest, "--num-actions", type=int)
    _add(ingest, "--terminal-state", type=int, help="defaults to the last state")
    _add(ingest, "--discount", type=float)
    _add(ingest, "--out")
    _add(ingest, "--counts-out")

    simulate = command("simulate", cmd_simulate, "write a synthetic session log")
    _add(simulate, "--model")
    _add(simulate, "--policy")
    _add(simulate, "--num-sessions", type=int)
    _add(simulate, "--max-steps", type=int)
    _add(simulate, "--weights", help="'uniform' or a weights file")
    _add(simulate, "--seed", type=int)
    _add(simulate, "--out")

    solve = command("solve", cmd_solve, "solve a model")
    _add(solve, "model", nargs="?")
    _add(solve, "--method", choices=[method.value for method in SolveMethod])
    _add(solve, "--lambda", dest="lambda", type=float)
    _add(solve, "--kappa", type=float)
    _add(solve, "--q-pref", type=float, help="prior mass on the preferred action")
    _add(solve, "--pref-action", type=int)
    _add(solve, "--action", type=int, help="action of the constant policy")
    _add(solve, "--tolerance", type=float)
    _add(solve, "--max-iterations", type=int)
    _add(solve, "--tie-break", choices=[rule.value for rule in TieBreak])
    _add(solve, "--out")

    evaluate = command("eval", cmd_eval, "evaluate a policy")
    _add(evaluate, "model", nargs="?")
    _add(evaluate, "policy", nargs="?")
    _add(evaluate, "--weights", help="'uniform' or a weights file")

    sweep = command("sweep", cmd_sweep, "run a multi-trial sweep")
    _add(sweep, "--example", choices=[name.value for name in ExampleName])
    _add(sweep, "--num-states", type=int)
    _add(sweep, "--model-seed", type=int)
    _add(sweep, "--model-path")
    _add(sweep, "--preferred-action", type=int)
    _add(sweep, "--method", choices=[method.value for method in SweepMethod])
    _add(sweep, "--lambdas", type=_float_list, help="comma-separated")
    _add(sweep, "--re-points", type=_pair_list, help="kappa:q_preferred pairs, comma-separated")
    _add(sweep, "--sample-grid", type=_int_list, help="comma-separated")
    _add(sweep, "--samples-per-state-action", type=int)
    _add(sweep, "--reward-noise-std", type=float)
    _add(sweep, "--reward-mode", choices=[mode.value for mode in RewardMode])
    _add(sweep, "--num-trials", type=int)
    _add(sweep, "--base-seed", type=int)
    _add(sweep, "--evaluation", choices=[metric.value for metric in EvaluationMetric])
    _add(sweep, "--weights-path")
    _add(sweep, "--evaluation-model", choices=[where.value for where in EvaluationModel])
    _add(sweep, "--scaling", action="store_true", help="run the sample-count scaling study")
    _add(sweep, "--out-dir")

    compare = command("compare", cmd_compare, "rank policies learned on an empirical model")
    _add(compare, "--true-model")
    _add(compare, "--empirical-model")
    _add(compare, "--pref-action", type=int)
    _add(compare, "--lambdas", type=_float_list, help="comma-separated")
    _add(compare, "--kappa", type=float)
    _add(compare, "--q-pref", type=float)
    _add(compare, "--weights", help="'uniform' or a weights file")
    _add(compare, "--reference")
    _add(compare, "--out")

    distance = command("distance", cmd_distance, "compare two models")
    _add(distance, "model_a", nargs="?")
    _add(distance, "model_b", nargs="?")
    _add(distance, "--out")

    return parser


def run_command(args: argparse.Namespace) -> int:
    try:
        return args.handler(args)
    except UsageError as exc:
        args.parser.print_usage(sys.stderr)
        logger.error("%s", exc)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("invalid input: %s", exc)
        return 1
    except MdpError as exc:
        logger.error("%s", exc)
        return exc.exit_code
