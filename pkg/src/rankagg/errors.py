"""Exception types raised across the package."""

from __future__ import annotations


class RankAggError(Exception):
    """Base class for all package errors."""


class InvalidPermutationError(RankAggError, ValueError):
    pass


class InvalidItemError(RankAggError, ValueError):
    pass


class ValidationError(RankAggError):
    """A dataset failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        shown = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"{len(self.violations)} validation error(s): {shown}{more}")


class MissingAnnotationError(RankAggError):
    pass


class NumericalError(RankAggError):
    pass


class SamplingStallError(RankAggError):
    pass


class EvaluationError(RankAggError):
    pass
