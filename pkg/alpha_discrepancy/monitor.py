import logging
from datetime import datetime
from typing import Any, Dict, List

from .exceptions import AllPointsSkippedError

logger = logging.getLogger(__name__)


class DegeneracyMonitor:
    """Tracks reference points an estimator had to skip.

    Status moves from ``healthy`` to ``degraded`` on the first skip and to
    ``failed`` once every reference point has been skipped.
    """

    def __init__(self, total: int, estimator: str = "estimator"):
        self.total: int = total
        self.estimator: str = estimator
        self.status: str = "healthy"
        self.skipped: List[Dict[str, Any]] = []
        self.started: datetime = datetime.now()
        logger.debug(f"DegeneracyMonitor initialized for {estimator} with {total} points")

    @property
    def skipped_points(self) -> int:
        return len(self.skipped)

    def record_skip(self, index: int, reason: str) -> str:
        """Record a skipped reference point and return the updated status."""
        self.skipped.append(
            {"timestamp": datetime.now().isoformat(), "index": index, "reason": reason}
        )
        if self.skipped_points >= self.total:
            self.status = "failed"
        else:
            self.status = "degraded"
        logger.warning(
            f"{self.estimator}: skipped reference point {index} ({reason}); "
            f"{self.skipped_points}/{self.total} skipped, status {self.status}"
        )
        return self.status

    def check(self) -> None:
        """Raise if nothing usable is left to average.

        Raises:
            AllPointsSkippedError: If every reference point was skipped
        """
        if self.status == "failed":
            reasons = sorted({entry["reason"] for entry in self.skipped})
            raise AllPointsSkippedError(
                f"{self.estimator}: all {self.total} reference points were skipped "
                f"({', '.join(reasons)})"
            )

    def reset(self) -> None:
        self.status = "healthy"
        self.skipped = []
        self.started = datetime.now()

    def get_status(self) -> Dict[str, Any]:
        return {
            "estimator": self.estimator,
            "status": self.status,
            "total": self.total,
            "skipped_points": self.skipped_points,
            "skipped": self.skipped,
            "started": self.started.isoformat(),
        }
