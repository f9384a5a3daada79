"""
Unit of Work for file artifacts.

Every file the toolkit reads or writes goes through `ArtifactUnitOfWork`, which:
  1. Parses input documents into validated domain types.
  2. Stages every output in a temporary file next to its destination.
  3. Publishes all staged outputs together on commit, or discards them on rollback.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from types import TracebackType

from pydantic import ValidationError

from mdpreg.core.exceptions import ArtifactIOError
from mdpreg.schemas.empirical import CountsReport, ModelDistanceReport, SessionLog
from mdpreg.schemas.experiments import PolicySuiteRow, SweepResult
from mdpreg.schemas.mdp import MdpModel, MdpModelDocument, Policy, StartWeights
from mdpreg.schemas.run_config import RunConfigFile
from mdpreg.schemas.solver import SolveReport, SolveReportDocument
from mdpreg.services.experiments import policy_suite_frame, sweep_raw_frame, sweep_summary_frame

logger = logging.getLogger(__name__)

SUMMARY_CSV = "summary.csv"
RAW_CSV = "raw.csv"
RESULT_JSON = "result.json"


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc


def _read_json(path: Path) -> object:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ArtifactIOError(path, f"invalid JSON: {exc.msg}", exc.lineno) from exc


class ArtifactUnitOfWork:
    """
    Context manager that scopes a group of output files to one commit.

    Usage:
        with ArtifactUnitOfWork(out_dir) as uow:
            model = uow.load_model(model_path)
            uow.save_report("report.json", report)
            uow.commit()

    Leaving the block without ``commit()`` (or with an exception) removes the staged
    files; destinations are only touched by ``commit()``.
    """

    def __init__(self, root: Path | str = ".") -> None:
        self._root = Path(root)
        self._staged: dict[Path, Path] | None = None

    def __enter__(self) -> "ArtifactUnitOfWork":
        self._staged = {}
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_val: BaseException | None,
        exc_tb: TracebackType | None,
    ) -> None:
        if self._staged is None:
            return
        try:
            if self._staged:
                if exc_type is None:
                    logger.warning("discarding %d uncommitted artifacts", len(self._staged))
                self.rollback()
        finally:
            self._staged = None

    @property
    def staged(self) -> dict[Path, Path]:
        if self._staged is None:
            raise RuntimeError("UnitOfWork is not active. Use 'with' context.")
        return self._staged

    def commit(self) -> list[Path]:
        """Move every staged file onto its destination; returns the destinations."""
        published = []
        for target, temporary in self.staged.items():
            try:
                os.replace(temporary, target)
            except OSError as exc:
                raise ArtifactIOError(target, exc.strerror or str(exc)) from exc
            published.append(target)
            logger.debug("wrote %s", target)
        self.staged.clear()
        return published

    def rollback(self) -> None:
        for temporary in self.staged.values():
            temporary.unlink(missing_ok=True)
        self.staged.clear()

    def _stage(self, relative: Path | str, text: str) -> Path:
        target = self._root / relative
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with tempfile.NamedTemporaryFile(
                "w",
                encoding="utf-8",
                dir=target.parent,
                prefix=f".{target.name}.",
                suffix=".tmp",
                delete=False,
            ) as handle:
                handle.write(text)
        except OSError as exc:
            raise ArtifactIOError(target, exc.strerror or str(exc)) from exc
        previous = self.staged.get(target)
        if previous is not None:
            previous.unlink(missing_ok=True)
        self.staged[target] = Path(handle.name)
        return target

    # ── Readers ──────────────────────────────────────────────────────────────

    def load_model(self, path: Path | str) -> MdpModel:
        """Parse a model document; invariant failures surface as validation errors."""
        path = Path(path)
        try:
            document = MdpModelDocument.model_validate_json(_read_text(path))
        except ValidationError as exc:
            raise ArtifactIOError(path, f"invalid model document: {exc}") from exc
        return document.to_model()

    def load_report(self, path: Path | str) -> SolveReport:
        path = Path(path)
        try:
            document = SolveReportDocument.model_validate_json(_read_text(path))
        except ValidationError as exc:
            raise ArtifactIOError(path, f"invalid solve report: {exc}") from exc
        return document.to_report()

    def load_policy(self, path: Path | str) -> Policy:
        """A policy file is a solve report, ``{"policy": [[...]]}`` or a bare matrix."""
        path = Path(path)
        data = _read_json(path)
        probs = data.get("policy") if isinstance(data, dict) else data
        if not isinstance(probs, list):
            raise ArtifactIOError(path, "expected a policy matrix or an object with 'policy'")
        return Policy(probs=probs)

    def load_weights(self, path: Path | str) -> StartWeights:
        path = Path(path)
        data = _read_json(path)
        weights = data.get("weights") if isinstance(data, dict) else data
        if not isinstance(weights, list):
            raise ArtifactIOError(path, "expected a weight array or an object with 'weights'")
        return StartWeights(weights=weights)

    def load_session_log(self, path: Path | str) -> SessionLog:
        path = Path(path)
        return SessionLog.from_text(_read_text(path), path)

    def load_run_config(self, path: Path | str) -> RunConfigFile:
        """Unknown sections or keys fail validation, all of them reported at once."""
        return RunConfigFile.model_validate(_read_json(Path(path)))

    # ── Writers ──────────────────────────────────────────────────────────────

    def save_model(self, path: Path | str, model: MdpModel) -> Path:
        return self._stage(path, MdpModelDocument.from_model(model).to_text())

    def save_report(
        self,
        path: Path | str,
        report: SolveReport,
        prior: dict[str, float | int | None] | None = None,
    ) -> Path:
        document = SolveReportDocument.from_report(report, prior)
        return self._stage(path, document.model_dump_json(indent=2) + "\n")

    def save_session_log(self, path: Path | str, log: SessionLog) -> Path:
        return self._stage(path, log.to_text())

    def save_counts_report(self, path: Path | str, report: CountsReport) -> Path:
        return self._stage(path, report.model_dump_json(indent=2) + "\n")

    def save_distance_report(self, path: Path | str, report: ModelDistanceReport) -> Path:
        return self._stage(path, report.model_dump_json(indent=2) + "\n")

    def write_sweep_result(self, result: SweepResult, directory: Path | str = ".") -> list[Path]:
        """``summary.csv``, ``raw.csv`` and the ``result.json`` mirror with the config echo."""
        directory = Path(directory)
        return [
            self._stage(directory / SUMMARY_CSV, sweep_summary_frame(result).to_csv(index=False)),
            self._stage(directory / RAW_CSV, sweep_raw_frame(result).to_csv(index=False)),
            self._stage(directory / RESULT_JSON, result.model_dump_json(indent=2) + "\n"),
        ]

    def write_policy_suite(self, path: Path | str, rows: list[PolicySuiteRow]) -> Path:
        return self._stage(path, policy_suite_frame(rows).to_csv(index=False))
