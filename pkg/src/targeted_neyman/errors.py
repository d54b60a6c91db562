"""Exception hierarchy.

Validation problems subclass :class:`ValueError`; numerical failures subclass
:class:`NumericalError`. The CLI maps the first family to exit code 1 and the
second to exit code 2.
"""

from __future__ import annotations


class DataValidationError(ValueError):
    """Input data or configuration violates a documented precondition."""


class DomainError(ValueError):
    """A function was evaluated outside its domain."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""

    def diagnostics(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ConvergenceError(NumericalError):
    def __init__(self, message: str, grad_norm: float, iterations: int):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.iterations = iterations

    def diagnostics(self) -> dict:
        out = super().diagnostics()
        out.update(grad_norm=self.grad_norm, iterations=self.iterations)
        return out


class InfeasibleError(NumericalError):
    def __init__(self, message: str, rank: int | None = None, p: int | None = None):
        super().__init__(message)
        self.rank = rank
        self.p = p

    def diagnostics(self) -> dict:
        out = super().diagnostics()
        out.update(rank=self.rank, p=self.p)
        return out


class DegenerateFluctuationError(NumericalError):
    """TMLE fluctuation requested with an identically zero representer."""


class OracleUnavailableError(DataValidationError):
    """A quantity needs the true DGP, which was not supplied."""
