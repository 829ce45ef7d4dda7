"""Exception hierarchy shared by all equipoise modules.

The CLI maps these onto exit codes: validation problems (schema, domain)
exit 2, numerical failures (singular designs, separation, non-convergence,
inference breakdowns) exit 3, and I/O problems exit 4.
"""

from __future__ import annotations


class EquipoiseError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(EquipoiseError):
    """An ingestion schema or run configuration is malformed."""


class IngestionError(EquipoiseError):
    """A data file could not be parsed (bad cell, ragged row, ...)."""


class DomainError(EquipoiseError):
    """Inputs violate a documented precondition or invariant."""


class FitError(EquipoiseError):
    """Base class for model-fitting failures."""


class SingularDesignError(FitError):
    """The design matrix is rank deficient."""


class SeparationError(FitError):
    """The likelihood has no finite maximizer (separated data)."""


class NonConvergenceError(FitError):
    """The iteration cap was reached before convergence.

    Carries the last coefficient iterate so callers can inspect how far
    the optimizer got.
    """

    def __init__(self, message: str, last_coefficients=None):
        super().__init__(message)
        self.last_coefficients = last_coefficients


class InferenceError(EquipoiseError):
    """Variance estimation failed (singular bread, too many bootstrap failures)."""


class BalanceError(EquipoiseError):
    """A balance guarantee that should hold numerically was violated."""


class HarnessError(EquipoiseError):
    """The Monte Carlo harness hit an excessive failure rate."""
