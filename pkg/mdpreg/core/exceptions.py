"""
Exception hierarchy shared by every layer.

Each class carries the process exit code the CLI reports for it:
  0 success, 1 validation error, 2 convergence failure, 3 I/O error.
"""

from pathlib import Path


class MdpError(Exception):
    """Root of all toolkit errors."""

    exit_code: int = 1


class ModelValidationError(MdpError, ValueError):
    """A domain invariant does not hold for the given inputs."""

    exit_code = 1


class NonAbsorbingChainError(ModelValidationError):
    """gamma = 1 and some non-terminal state never reaches a terminal state."""

    def __init__(self, state: int, context: str = "") -> None:
        self.state = state
        detail = f" ({context})" if context else ""
        super().__init__(
            f"non-absorbing chain: state {state} cannot reach a terminal state{detail}"
        )


class ConvergenceError(MdpError):
    """An iterative or linear solve missed its accuracy postcondition."""

    exit_code = 2


class ArtifactIOError(MdpError):
    """A file could not be read, parsed or written."""

    exit_code = 3

    def __init__(self, path: Path | str, message: str, line: int | None = None) -> None:
        self.path = Path(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {message}")
