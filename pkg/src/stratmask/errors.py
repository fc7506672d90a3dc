"""Exception and warning taxonomy shared across the package."""

from __future__ import annotations


class StratmaskError(Exception):
    """Base class for all domain errors raised by this package."""


class SchemaError(StratmaskError):
    """A serialized dataset/scenario/function file violates the documented schema."""


class DegenerateGradientError(StratmaskError):
    """A multiplier was requested against a (numerically) zero gradient."""


class UnsupportedDimensionError(StratmaskError):
    """A brute-force operation was asked to run above its dimension limit."""


class InfeasibleRegionError(StratmaskError):
    """The feasible set of a constrained solve is empty (or no feasible start exists)."""


class NonConvergedError(StratmaskError):
    """An iterative solver stopped above its residual tolerance.

    Carries the best iterate found so callers can inspect or retry.
    """

    def __init__(self, message: str, best_point=None, residual: float | None = None):
        super().__init__(message)
        self.best_point = best_point
        self.residual = residual


class UndefinedMarginError(StratmaskError):
    """A pairwise margin was requested for a dataset with no off-diagonal pairs (K=1)."""


class MaskingInfeasibleError(StratmaskError):
    """No threshold perturbation inside the search box reaches the target margin.

    ``best_margin`` records the smallest margin seen during the search.
    """

    def __init__(self, message: str, best_margin: float | None = None):
        super().__init__(message)
        self.best_margin = best_margin


class KappaDegenerateError(StratmaskError):
    """The gradient-difference denominator of the kappa constant vanishes."""

    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


class StudyUnreliableError(StratmaskError):
    """Too many Monte Carlo trials failed for the study to be trusted."""


class ValidationError(StratmaskError):
    """A dataset failed its invariant checks."""


class NonMonotoneDataWarning(UserWarning):
    """A fitted multiplier came out non-positive, hinting at non-monotone data."""


class ConditioningWarning(UserWarning):
    """A linear system contains rows with widely spread magnitudes."""


class DegenerateMarginWarning(UserWarning):
    """The naive margin is non-positive, so masking has nothing to reduce."""


class BoundHeuristicWarning(UserWarning):
    """The noise covariance is anisotropic; the analytic bound is heuristic there."""
