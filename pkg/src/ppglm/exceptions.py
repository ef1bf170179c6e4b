"""Exception hierarchy; the CLI maps these onto distinct exit codes."""


class PpglmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PpglmError):
    """Invalid configuration: unknown family, malformed grid, bad option."""


class DataValidationError(PpglmError):
    """Input data violates a family domain or contains non-finite values."""


class DegenerateDataError(DataValidationError):
    """Response is degenerate for the requested family (e.g. all-constant
    binary response, for which no MLE exists)."""


class NumericError(PpglmError):
    """Base class for numeric failures (exit code 5 in the CLI)."""


class FitNonConvergenceError(NumericError):
    """GLM fit did not converge within the iteration budget.

    Carries the last iterate in ``last_fit``.
    """

    def __init__(self, message, last_fit=None):
        super().__init__(message)
        self.last_fit = last_fit


class SaturatedFitError(NumericError):
    """A fitted weight collapsed to zero, so the pseudo-data are undefined."""


class RankDeficiencyError(NumericError):
    """A selected design submatrix is rank deficient."""


class LassoConvergenceError(NumericError):
    """Coordinate descent exhausted its sweep budget above the gap tolerance.

    Carries the final duality gap in ``gap``.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class PathCyclingError(NumericError):
    """The piecewise-linear path walk revisited a state without advancing."""


class SupportTooRemoteError(NumericError):
    """Truncation support carries no representable probability mass."""


class SelectionInconsistencyError(NumericError):
    """Observed statistic lies outside the computed selection support."""


class EmptyModelError(PpglmError):
    """The Lasso selected no covariates, so there is nothing to infer on."""
