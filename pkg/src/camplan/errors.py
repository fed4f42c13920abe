"""Exception hierarchy shared by every camplan layer."""

from __future__ import annotations

from typing import Optional


class CamplanError(Exception):
    """Root of all domain errors raised by the package."""


class MeshFormatError(CamplanError):
    """Raised when an OBJ record cannot be parsed."""

    def __init__(self, message: str, *, line_number: Optional[int] = None) -> None:
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class MeshStructureError(CamplanError):
    """Raised for index errors and non-watertight meshes."""


class SceneError(CamplanError):
    """Raised when an environment or time step is inconsistent."""


class PoseError(CamplanError, ValueError):
    """Raised when a camera pose cannot be constructed."""


class DomainError(CamplanError):
    """Raised when a variable vector does not fit the optimization domain."""


class ConfigError(CamplanError):
    """Raised when a run configuration violates the schema rules."""


class BudgetExceededError(CamplanError):
    """Raised when a grid scan needs more evaluations than allowed."""

    def __init__(self, required: int, budget: int) -> None:
        super().__init__(
            f"scan needs {required} evaluations but the budget is {budget}"
        )
        self.required = required
        self.budget = budget


class SolverError(CamplanError):
    """Raised when an optimizer cannot proceed."""


class SingularSystemError(SolverError):
    """Raised when the surrogate interpolation system is rejected."""


__all__ = [
    "CamplanError",
    "MeshFormatError",
    "MeshStructureError",
    "SceneError",
    "PoseError",
    "DomainError",
    "ConfigError",
    "BudgetExceededError",
    "SolverError",
    "SingularSystemError",
]
