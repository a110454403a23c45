"""
Exceptions for the alpha_discrepancy package.
"""

from typing import Any, Sequence


class AlphaDiscrepancyError(Exception):
    """Base class for every error raised by the package."""

    pass


class DomainError(AlphaDiscrepancyError):
    """Raised when an input lies outside the domain of an operation."""

    pass


class SupportMismatchError(AlphaDiscrepancyError):
    """Raised when two measures are compared over different supports."""

    pass


class UnsupportedLimitError(AlphaDiscrepancyError):
    """Raised when a formula has no defined form at the requested alpha limit."""

    pass


class RankDeficiencyError(AlphaDiscrepancyError):
    """Raised when a Jacobian violates the full-column-rank (immersion) assumption."""

    def __init__(self, smallest: float, largest: float) -> None:
        self.smallest = smallest
        self.largest = largest
        super().__init__(
            "Jacobian is rank deficient: smallest singular value "
            f"{smallest:.3e} < 1e-10 x largest {largest:.3e}; the map must be an "
            "immersion (Jacobian of full column rank everywhere)"
        )


class IndefiniteCombinationError(AlphaDiscrepancyError):
    """Raised when alpha*A + (1 - alpha)*I is not positive definite."""

    def __init__(self, eigenvalue: float, alpha: float) -> None:
        self.eigenvalue = eigenvalue
        self.alpha = alpha
        super().__init__(
            f"alpha*A + (1-alpha)*I is not positive definite for alpha={alpha}: "
            f"eigenvalue {eigenvalue!r} of A gives "
            f"{alpha * eigenvalue + (1.0 - alpha)!r} <= 0"
        )


class NonFiniteMapError(AlphaDiscrepancyError):
    """Raised when a map evaluation produces a non-finite value."""

    def __init__(self, coordinate: int, point: Sequence[float]) -> None:
        self.coordinate = coordinate
        self.point = list(point)
        super().__init__(
            f"Map output is not finite when perturbing latent coordinate {coordinate} "
            f"at {self.point}"
        )


class WeightsParseError(AlphaDiscrepancyError):
    """Raised when an MLP weights file is malformed."""

    def __init__(self, line: int, field: str, message: str) -> None:
        self.line = line
        self.field = field
        super().__init__(f"line {line}, field '{field}': {message}")


class BracketError(AlphaDiscrepancyError):
    """Raised when a line-search bracket does not contain an interior minimum."""

    pass


class CalibrationError(AlphaDiscrepancyError):
    """Raised when perplexity calibration of a row does not converge."""

    def __init__(self, row: int, lower: float, upper: float, entropy_gap: float) -> None:
        self.row = row
        self.bracket = (lower, upper)
        super().__init__(
            f"Precision calibration did not converge for row {row}: bracket "
            f"[{lower!r}, {upper!r}], entropy gap {entropy_gap:.3e}"
        )


class DegenerateRowError(AlphaDiscrepancyError):
    """Raised when a row's entropy cannot reach the target for any precision."""

    pass


class NonFiniteCostError(AlphaDiscrepancyError):
    """Raised when the embedding cost becomes non-finite during optimization."""

    def __init__(self, iteration: int, cost: float) -> None:
        self.iteration = iteration
        super().__init__(f"Embedding cost is {cost!r} at iteration {iteration}")


class DataParseError(AlphaDiscrepancyError):
    """Raised when a data file cannot be parsed."""

    def __init__(self, row: int, message: str) -> None:
        self.row = row
        super().__init__(f"row {row}: {message}")


class UsageError(AlphaDiscrepancyError):
    """Raised when a run configuration is invalid."""

    pass


class ReferencePointError(AlphaDiscrepancyError):
    """Wraps an error raised while processing a single reference point."""

    def __init__(self, point: Any, cause: AlphaDiscrepancyError) -> None:
        self.point = [float(v) for v in point]
        self.cause = cause
        super().__init__(f"at reference point y0={self.point}: {cause}")


class AllPointsSkippedError(AlphaDiscrepancyError):
    """Raised when every reference point of an estimator was skipped."""

    pass
