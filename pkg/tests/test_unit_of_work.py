"""Tests for staged artifact reads and writes."""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from mdpreg.core.exceptions import ArtifactIOError
from mdpreg.schemas.empirical import SessionLog
from mdpreg.schemas.experiments import ExampleName, SweepConfig
from mdpreg.schemas.mdp import MdpModel
from mdpreg.schemas.solver import SolverConfig
from mdpreg.services.experiments import example2_model, run_sweep
from mdpreg.services.solvers import solve_unregularized
from mdpreg.services.unit_of_work import ArtifactUnitOfWork


class TestStaging:
    def test_commit_publishes(self, tmp_path, chain_model):
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_model("model.json", chain_model)
            assert not (tmp_path / "model.json").exists()
            published = uow.commit()
        assert published == [tmp_path / "model.json"]
        assert (tmp_path / "model.json").exists()
        assert [p.name for p in tmp_path.iterdir()] == ["model.json"]

    def test_no_commit_leaves_nothing(self, tmp_path, chain_model):
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_model("model.json", chain_model)
        assert list(tmp_path.iterdir()) == []

    def test_exception_rolls_back(self, tmp_path, chain_model):
        with pytest.raises(RuntimeError):
            with ArtifactUnitOfWork(tmp_path) as uow:
                uow.save_model("model.json", chain_model)
                raise RuntimeError("boom")
        assert list(tmp_path.iterdir()) == []

    def test_restaging_replaces_previous(self, tmp_path, chain_model):
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_model("model.json", chain_model)
            uow.save_model("model.json", chain_model)
            assert len(uow.staged) == 1
            uow.commit()
        assert [p.name for p in tmp_path.iterdir()] == ["model.json"]

    def test_inactive_outside_context(self):
        with pytest.raises(RuntimeError):
            ArtifactUnitOfWork().commit()

    def test_creates_parent_directories(self, tmp_path, chain_model):
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_model("nested/dir/model.json", chain_model)
            uow.commit()
        assert (tmp_path / "nested" / "dir" / "model.json").exists()


class TestModelFiles:
    def test_round_trip_is_exact(self, tmp_path):
        model = example2_model(30, seed=5)
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_model("model.json", model)
            uow.commit()
            restored = uow.load_model(tmp_path / "model.json")
        assert np.array_equal(restored.transitions, model.transitions)
        assert np.array_equal(restored.rewards, model.rewards)
        assert restored.terminal_states == model.terminal_states

    def test_floats_written_with_17_significant_digits(self, tmp_path):
        model = MdpModel(
            transitions=[[[0.1, 0.9], [0.0, 1.0]]],
            rewards=[[[1.0 / 3.0, 2.0], [0.0, 0.0]]],
            discount=0.5,
            terminal_states=frozenset({1}),
        )
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_model("model.json", model)
            uow.commit()
            restored = uow.load_model(tmp_path / "model.json")
        text = (tmp_path / "model.json").read_text()
        assert '"discount": 5.0000000000000000e-01' in text
        assert "1.0000000000000001e-01" in text
        assert "3.3333333333333331e-01" in text
        document = json.loads(text)
        assert document["version"] == 1
        assert document["terminal_states"] == [1]
        assert np.array_equal(restored.transitions, model.transitions)
        assert np.array_equal(restored.rewards, model.rewards)

    def test_missing_file(self, tmp_path):
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ArtifactIOError) as exc_info:
                uow.load_model(tmp_path / "absent.json")
        assert exc_info.value.exit_code == 3

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ArtifactIOError):
                uow.load_model(path)

    def test_invalid_document(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"num_states": 2}))
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ArtifactIOError):
                uow.load_model(path)

    def test_invariant_violation_is_a_validation_error(self, tmp_path):
        path = tmp_path / "model.json"
        document = {
            "num_states": 2,
            "num_actions": 1,
            "discount": 0.9,
            "transitions": [[[0.5, 0.6], [0.0, 1.0]]],
            "rewards": [[[0.0, 0.0], [0.0, 0.0]]],
        }
        path.write_text(json.dumps(document))
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ValidationError):
                uow.load_model(path)


class TestOtherArtifacts:
    def test_report_and_policy(self, tmp_path, chain_model):
        report = solve_unregularized(chain_model, SolverConfig())
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_report("report.json", report, {"lambda": None})
            uow.commit()
            restored = uow.load_report(tmp_path / "report.json")
            policy = uow.load_policy(tmp_path / "report.json")
        assert np.array_equal(restored.policy.probs, report.policy.probs)
        assert np.array_equal(restored.values.values, report.values.values)
        assert np.array_equal(policy.probs, report.policy.probs)

    def test_bare_policy_matrix(self, tmp_path):
        path = tmp_path / "policy.json"
        path.write_text("[[0.5, 0.5], [1.0, 0.0]]")
        with ArtifactUnitOfWork(tmp_path) as uow:
            assert uow.load_policy(path).probs.tolist() == [[0.5, 0.5], [1.0, 0.0]]

    def test_policy_file_shape_checked(self, tmp_path):
        path = tmp_path / "policy.json"
        path.write_text('{"weights": [1.0]}')
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ArtifactIOError):
                uow.load_policy(path)

    def test_weights(self, tmp_path):
        (tmp_path / "a.json").write_text("[1, 0, 2]")
        (tmp_path / "b.json").write_text('{"weights": [0, 1]}')
        with ArtifactUnitOfWork(tmp_path) as uow:
            assert uow.load_weights(tmp_path / "a.json").weights.tolist() == [1.0, 0.0, 2.0]
            assert uow.load_weights(tmp_path / "b.json").weights.tolist() == [0.0, 1.0]

    def test_session_log_round_trip(self, tmp_path):
        log = SessionLog.from_text("0; (0,0.1,1) (1,2.5,2); END\n1; (0,3.0,1); TRUNC\n")
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.save_session_log("log.txt", log)
            uow.commit()
            assert uow.load_session_log(tmp_path / "log.txt") == log

    def test_session_log_error_names_file(self, tmp_path):
        path = tmp_path / "log.txt"
        path.write_text("0; (0,1,1); END\n0; broken; END\n")
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ArtifactIOError) as exc_info:
                uow.load_session_log(path)
        assert exc_info.value.line == 2
        assert exc_info.value.path == path

    def test_run_config_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"sweep": {"num_trails": 5}}))
        with ArtifactUnitOfWork(tmp_path) as uow:
            with pytest.raises(ValidationError):
                uow.load_run_config(path)

    def test_sweep_result_files(self, tmp_path):
        cfg = SweepConfig(
            example=ExampleName.EXAMPLE1,
            num_states=4,
            lambdas=[0.0, 1.0],
            samples_per_state_action=20,
            num_trials=2,
            base_seed=1,
        )
        result = run_sweep(cfg)
        with ArtifactUnitOfWork(tmp_path) as uow:
            uow.write_sweep_result(result, "out")
            uow.commit()
        names = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert names == ["raw.csv", "result.json", "summary.csv"]
        header = (tmp_path / "out" / "summary.csv").read_text().splitlines()[0]
        assert header == "grid_param,value_mean,value_stderr,trials,metric_name"
        echoed = json.loads((tmp_path / "out" / "result.json").read_text())
        assert echoed["config"]["base_seed"] == 1
