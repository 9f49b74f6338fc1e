"""Exception types shared across the toolkit.

Validation problems (bad inputs, broken invariants) and numerical
failures (solver non-convergence) are kept distinct so the CLI can map
them to different exit codes.
"""

from __future__ import annotations


class PanelCauseError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(PanelCauseError):
    """Raised when inputs violate a documented precondition or invariant."""


class NumericalError(PanelCauseError):
    """Raised when a numerical routine fails to converge or degenerates."""


class ConvergenceError(NumericalError):
    """Solver did not reach the requested tolerance.

    Carries the best iterate found so callers can inspect or salvage it.
    """

    def __init__(self, message: str, best_weights=None, kkt_residual: float | None = None):
        super().__init__(message)
        self.best_weights = best_weights
        self.kkt_residual = kkt_residual
