"""Exception hierarchy for cadt-queue.

Every error raised on purpose by the library derives from ``CadtQueueError``.
Validation problems are also ``ValueError`` subclasses so callers that only
know about the builtin still catch them. Numerical failures share
``NumericalError`` so the CLI can map them to a single exit status.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Sequence

__all__ = [
    "AbsorbingStructureError",
    "CadtQueueError",
    "ChainStructureError",
    "ConfigError",
    "ConvergenceError",
    "DegenerateBoundaryError",
    "ModelNotCoveredError",
    "MomentInfeasibleError",
    "NumericalError",
    "ScenarioError",
    "UnstableSystemError",
]


class CadtQueueError(Exception):
    """Base class for all cadt-queue errors."""


class ScenarioError(CadtQueueError, ValueError):
    """A scenario field lies outside its valid domain."""

    def __init__(self, message: str, *, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


class ConfigError(CadtQueueError, ValueError):
    """A run configuration could not be parsed or validated.

    Attributes:
        line: 1-based line of the offending entry, when known.
        key: Config key involved, when known.
    """

    def __init__(self, message: str, *, line: int | None = None, key: str | None = None) -> None:
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class ModelNotCoveredError(CadtQueueError):
    """No analytic model covers the requested scenario."""

    def __init__(self, message: str, *, nearest: str) -> None:
        super().__init__(f"{message} (nearest supported model: {nearest})")
        self.nearest = nearest


class NumericalError(CadtQueueError):
    """Base class for failures inside the numerical solvers."""


class UnstableSystemError(NumericalError):
    """The queue (or one of its priority classes) is not positive recurrent."""


class ConvergenceError(NumericalError):
    """A fixed-point iteration stopped at its cap without converging."""

    def __init__(self, message: str, *, residual: float, iterations: int) -> None:
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class DegenerateBoundaryError(NumericalError):
    """The boundary balance equations of a QBD are singular."""


class AbsorbingStructureError(NumericalError):
    """A first-passage analysis does not reach the requested end states."""


class ChainStructureError(NumericalError):
    """A generated chain breaks its own layout, or its solution gives a negative wait."""


class MomentInfeasibleError(NumericalError):
    """A moment triple cannot belong to any nonnegative distribution."""

    def __init__(self, message: str, *, moments: Sequence[float]) -> None:
        super().__init__(f"{message}: moments={tuple(moments)!r}")
        self.moments = tuple(moments)
