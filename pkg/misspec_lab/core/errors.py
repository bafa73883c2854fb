from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from misspec_lab.core.types import Design, DesignCertificate


class MisspecLabError(Exception):
    """Base class for all errors raised by misspec-lab."""


class PreconditionError(MisspecLabError, ValueError):
    """An argument lies outside the precondition of the called operation."""


class RankDeficientError(MisspecLabError):
    """A Gram matrix is singular: the design support does not span the feature space."""

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DesignError(MisspecLabError):
    """Frank–Wolfe did not reach its target. Carries the best design found."""

    def __init__(
        self,
        message: str,
        best_design: Design | None = None,
        certificate: DesignCertificate | None = None,
    ):
        super().__init__(message)
        self.best_design = best_design
        self.certificate = certificate


class JLConstructionError(MisspecLabError):
    """Rejection sampling ran out of retries for a row."""

    def __init__(self, message: str, achieved_max_inner: float, rows_accepted: int):
        super().__init__(message)
        self.achieved_max_inner = achieved_max_inner
        self.rows_accepted = rows_accepted


class HardnessOverflowError(MisspecLabError):
    """The hard-instance action count exceeds the configured cap."""


class EnumerationBudgetError(MisspecLabError):
    """An exhaustive search would exceed its budget."""


class CertificationError(MisspecLabError):
    """A constructed object failed its own certificate (a construction bug)."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.details = details or {}


class ConfigError(MisspecLabError):
    """Experiment configuration could not be loaded or validated."""
