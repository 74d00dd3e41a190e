from __future__ import annotations

from typing import Any, Optional


class IganetError(Exception):
    """Base class for every error raised by the package.

    ``exit_code`` is what ``app.py`` returns to the shell:
    1 usage, 2 numerical failure, 3 I/O.
    """

    exit_code = 2


class ConfigError(IganetError):
    exit_code = 1


class ContractError(IganetError, ValueError):
    """Caller violated a documented precondition (shapes, lengths, ranges)."""

    exit_code = 1


class DomainError(IganetError, ValueError):
    """Argument outside the mathematical domain of the operation."""

    exit_code = 1


class TopologyError(IganetError):
    pass


class SingularParametrizationError(IganetError):
    pass


class SingularityError(IganetError):
    pass


class AssemblyError(IganetError):
    pass


class SingularMatrixError(IganetError):
    pass


class ConvergenceError(IganetError):
    def __init__(
        self,
        message: str,
        best_x: Any = None,
        residual: float = float("nan"),
        iterations: int = 0,
    ):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual
        self.iterations = iterations


class DivergenceError(IganetError):
    def __init__(self, message: str, checkpoint: Optional[Any] = None, step: int = 0):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.step = step


class StorageError(IganetError):
    exit_code = 3
