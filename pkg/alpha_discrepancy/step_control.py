import logging

from .exceptions import DomainError

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12


class StepController:
    """Backtracking step size for the embedding optimizer.

    A rejected step halves the step size. In ``adaptive`` mode an accepted
    step grows it by ``growth`` up to the initial step; ``fixed`` mode only
    ever shrinks.
    """

    def __init__(self, mode: str, initial_step: float, growth: float = 1.1):
        if mode not in ("fixed", "adaptive"):
            raise DomainError(f"unknown step mode {mode!r}")
        if not initial_step > 0:
            raise DomainError(f"initial step must be positive, got {initial_step}")
        self.mode: str = mode
        self.max_step: float = initial_step
        self.growth: float = growth
        self.current_step: float = initial_step
        self.consecutive_rejections: int = 0
        self.consecutive_acceptances: int = 0
        logger.info(f"StepController initialized with mode={mode}, step={initial_step}")

    def adjust(self, accepted: bool) -> float:
        if accepted:
            self.consecutive_acceptances += 1
            self.consecutive_rejections = 0
            if self.mode == "adaptive":
                self.current_step = min(self.max_step, self.current_step * self.growth)
        else:
            self.consecutive_rejections += 1
            self.consecutive_acceptances = 0
            old_step = self.current_step
            self.current_step = old_step * 0.5
            logger.debug(f"Step halved from {old_step} to {self.current_step} after rejection")
        return self.current_step

    @property
    def exhausted(self) -> bool:
        return self.current_step < MIN_STEP

    def get_step(self) -> float:
        return self.current_step
