"""Run-event logging and the post-condition check wrapped around every estimator."""

import functools
import json
import logging
import time
from datetime import datetime
from typing import Any, Callable, Dict, TypeVar

from .models import DiscrepancyEstimate

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., DiscrepancyEstimate])

NOISE_SIGMAS = 3.0


def log_run_event(event_type: str, data: Dict[str, Any]) -> None:
    """Emit one JSON object per log line."""
    logger.info(
        json.dumps(
            {
                "timestamp": datetime.now().isoformat(),
                "event_type": event_type,
                "data": data,
            },
            default=str,
        )
    )


def check_estimate(estimate: DiscrepancyEstimate) -> bool:
    """True when the estimate is nonnegative up to Monte Carlo noise.

    A violation is logged, not raised: a negative value within a few
    standard errors is ordinary noise and anything beyond is worth a look.
    """
    if estimate.value >= -NOISE_SIGMAS * estimate.std_error:
        return True
    logger.warning(
        f"{estimate.variant.value} estimate {estimate.value!r} is below "
        f"-{NOISE_SIGMAS:g} x std_error ({estimate.std_error!r})"
    )
    return False


def estimator_contract(func: F) -> F:
    """Time an estimator, check its result and log a structured event."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> DiscrepancyEstimate:
        started = time.perf_counter()
        estimate = func(*args, **kwargs)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        ok = check_estimate(estimate)
        log_run_event(
            "estimate",
            {
                "estimator": func.__name__,
                "variant": estimate.variant.value,
                "alpha": estimate.alpha,
                "value": estimate.value,
                "std_error": estimate.std_error,
                "m": estimate.m,
                "n": estimate.n,
                "skipped_points": estimate.skipped_points,
                "nonnegative_within_noise": ok,
                "elapsed_ms": round(elapsed_ms, 3),
            },
        )
        return estimate

    return wrapper  # type: ignore[return-value]
