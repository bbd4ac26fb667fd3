"""
services/errors.py
Exception hierarchy shared by every service and handler.

Design:
- Everything derives from ValueError so callers that only know "bad input"
  keep working; the message is always written for the person at the terminal.
- Three families map onto the CLI exit-code contract:
    UsageError   → 2  (the request itself is malformed)
    DataError    → 3  (the input data violates a precondition)
    NumericError → 4  (the numbers cannot be computed as asked)
"""


class AgnosticError(ValueError):
    """Root of all errors raised on purpose by this package."""

    exit_code = 1


class UsageError(AgnosticError):
    exit_code = 2


class DataError(AgnosticError):
    exit_code = 3


class NumericError(AgnosticError):
    exit_code = 4


# ── Usage ─────────────────────────────────────────────────────────────────

class MissingDf(UsageError):
    """A Welch interval was requested without degrees of freedom."""


class OutOfDomain(UsageError):
    """A probability or degrees-of-freedom argument lies outside its domain."""


class InvalidDesign(UsageError):
    """n_A must satisfy 0 < n_A < n."""


class InvalidSampleSize(UsageError):
    """Sample size must satisfy 1 ≤ n ≤ N."""


class UnsupportedDesign(UsageError):
    """The estimator or calculation is not defined for this number of groups."""


class TooManySubsets(UsageError):
    """Exact enumeration would visit more subsets than the guard allows."""


# ── Data ──────────────────────────────────────────────────────────────────

class MissingColumn(DataError):
    pass


class MissingValue(DataError):
    pass


class NonFinite(DataError):
    pass


class EmptySample(DataError):
    pass


class EmptyGroup(DataError):
    pass


class GroupTooSmall(DataError):
    pass


class MultiCovariateUnsupported(DataError):
    """The formula is only defined for a single covariate."""


# ── Numeric ───────────────────────────────────────────────────────────────

class RankDeficient(NumericError):
    """Design matrix has column rank below its column count."""


class LeverageOne(NumericError):
    """An observation has h_ii = 1, so HC2/HC3 inflation is undefined."""


class DegenerateAuxiliary(NumericError):
    """The auxiliary variable has zero variance."""


class DegenerateVariance(NumericError):
    """Both group variances are zero."""


class SimulationFailure(NumericError):
    """Too many replications failed to produce an estimate."""
