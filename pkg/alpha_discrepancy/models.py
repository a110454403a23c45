from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import DomainError, SupportMismatchError


class AlphaParam(BaseModel):
    alpha: float = Field(..., description="Order of the alpha-divergence")
    limit_tolerance: float = Field(
        default=1e-6,
        description="Distance to 0 or 1 below which the KL limit formulas are used",
    )

    @field_validator("limit_tolerance")
    @classmethod
    def validate_tolerance(cls, v: float) -> float:
        if not 0.0 < v < 0.01:
            raise DomainError(f"limit_tolerance must lie in (0, 0.01), got {v}")
        return v

    @property
    def at_kl_limit(self) -> bool:
        return abs(1.0 - self.alpha) <= self.limit_tolerance

    @property
    def at_reverse_kl_limit(self) -> bool:
        return abs(self.alpha) <= self.limit_tolerance


AlphaLike = Union[AlphaParam, float, int]


def as_alpha(a: AlphaLike) -> AlphaParam:
    """Coerce a bare number into an AlphaParam with the default tolerance."""
    if isinstance(a, AlphaParam):
        return a
    return AlphaParam(alpha=float(a))


class PositiveMeasure(BaseModel):
    weights: List[float] = Field(..., description="Nonnegative mass per atom")
    atom_ids: Optional[List[int]] = Field(
        default=None, description="Atom indices; defaults to 0..n-1"
    )

    @field_validator("weights")
    @classmethod
    def validate_weights(cls, v: List[float]) -> List[float]:
        arr = np.asarray(v, dtype=float)
        if arr.size == 0:
            raise DomainError("a positive measure needs at least one atom")
        if not np.all(np.isfinite(arr)):
            raise DomainError("weights must be finite")
        if np.any(arr < 0):
            idx = int(np.argmin(arr))
            raise DomainError(f"weight {idx} is negative ({arr[idx]!r})")
        if not np.any(arr > 0):
            raise DomainError("at least one weight must be positive")
        return v

    @model_validator(mode="after")
    def fill_atom_ids(self) -> "PositiveMeasure":
        if self.atom_ids is None:
            self.atom_ids = list(range(len(self.weights)))
        elif len(self.atom_ids) != len(self.weights):
            raise SupportMismatchError(
                f"{len(self.atom_ids)} atom ids for {len(self.weights)} weights"
            )
        return self

    @classmethod
    def from_array(cls, weights: "np.ndarray") -> "PositiveMeasure":
        return cls(weights=[float(w) for w in np.ravel(weights)])

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


class QuadratureAxis(BaseModel):
    lower: float
    upper: float
    points: int = Field(..., ge=2, description="Number of grid nodes, endpoints included")

    @model_validator(mode="after")
    def check_order(self) -> "QuadratureAxis":
        if not self.upper > self.lower:
            raise DomainError(f"axis upper {self.upper} must exceed lower {self.lower}")
        return self

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.points)


class QuadratureGrid(BaseModel):
    axes: List[QuadratureAxis] = Field(..., min_length=1)

    @classmethod
    def line(cls, lower: float, upper: float, points: int) -> "QuadratureGrid":
        return cls(axes=[QuadratureAxis(lower=lower, upper=upper, points=points)])

    @property
    def dim(self) -> int:
        return len(self.axes)


class QuadratureResult(BaseModel):
    value: float
    p_mass: float
    q_mass: float
    normalization_ok: bool = Field(
        ..., description="Both densities integrate to 1 within 1e-6 on the grid"
    )


class Variant(str, Enum):
    CLOSED_FORM = "closed"
    EMPIRICAL_R_EQ_P = "empirical-rp"
    EMPIRICAL_R_EQ_Q = "empirical-rq"
    CONFORMAL = "conformal"


class LambdaSummary(BaseModel):
    lambda_min: float
    lambda_mean: float
    lambda_max: float
    bandwidth_min: float
    bandwidth_mean: float
    bandwidth_max: float


class DiscrepancyEstimate(BaseModel):
    value: float
    std_error: float = Field(..., ge=0.0)
    m: int = Field(..., description="Reference points drawn from the prior")
    n: int = Field(default=0, description="Neighbours per reference point (0 for closed forms)")
    alpha: float
    variant: Variant
    seed: int
    skipped_points: int = 0
    lambda_summary: Optional[LambdaSummary] = None
    pointwise: List[float] = Field(default_factory=list, exclude=True)
    lambda_star: List[float] = Field(default_factory=list, exclude=True)

    def report(self) -> Dict[str, object]:
        """JSON-ready report; lambda_summary only appears for conformal runs."""
        data = self.model_dump(mode="json")
        if data.get("lambda_summary") is None:
            data.pop("lambda_summary", None)
        return data


class LambdaSearch(str, Enum):
    ANALYTIC_D1 = "analytic-d1"
    GOLDEN_SECTION = "golden-section"


class ConformalConfig(BaseModel):
    lambda_search: LambdaSearch = LambdaSearch.ANALYTIC_D1
    bracket: Tuple[float, float] = Field(
        default=(1e-4, 1e4), description="Search range of lambda (log scale)"
    )
    tol: float = Field(default=1e-8, gt=0.0, description="Relative tolerance on lambda")

    @field_validator("bracket")
    @classmethod
    def validate_bracket(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not 0.0 < v[0] < v[1]:
            raise DomainError(f"lambda bracket must satisfy 0 < low < high, got {v}")
        return v


class GammaMode(BaseModel):
    kind: str = Field(default="optimal", description="optimal or fixed")
    gamma: Optional[float] = Field(default=None, description="Hand-set gamma for fixed mode")

    @model_validator(mode="after")
    def check_gamma(self) -> "GammaMode":
        if self.kind not in ("optimal", "fixed"):
            raise DomainError(f"unknown gamma mode {self.kind!r}")
        if self.kind == "fixed" and (self.gamma is None or not self.gamma > 0):
            raise DomainError("fixed gamma mode needs gamma > 0")
        return self

    @classmethod
    def optimal(cls) -> "GammaMode":
        return cls(kind="optimal")

    @classmethod
    def fixed(cls, gamma: float) -> "GammaMode":
        return cls(kind="fixed", gamma=gamma)

    @property
    def is_optimal(self) -> bool:
        return self.kind == "optimal"


class Normalization(str, Enum):
    NONE = "none"
    ROW_NORMALIZED = "row-normalized"


class SimilarityMatrix(BaseModel):
    """Per-reference similarities over the other points.

    ``rows[i]`` lists the similarities of point i to every j != i in
    increasing j order, so the diagonal never exists.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: np.ndarray
    normalization: Normalization = Normalization.NONE
    precisions: Optional[np.ndarray] = None
    entropies: Optional[np.ndarray] = None
    log_rows: Optional[np.ndarray] = Field(
        default=None, description="log of rows, kept when it is known without underflow"
    )

    @field_validator("rows", mode="before")
    @classmethod
    def validate_rows(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim != 2 or v.shape[1] != v.shape[0] - 1:
            raise DomainError(f"similarity rows must have shape (n, n-1), got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("similarities must be finite and nonnegative")
        return v

    @model_validator(mode="after")
    def check_normalization(self) -> "SimilarityMatrix":
        if self.normalization == Normalization.ROW_NORMALIZED:
            sums = self.rows.sum(axis=1)
            worst = int(np.argmax(np.abs(sums - 1.0)))
            if abs(sums[worst] - 1.0) > 1e-10:
                raise DomainError(f"row {worst} sums to {sums[worst]!r}, not 1")
        if self.log_rows is not None and np.shape(self.log_rows) != self.rows.shape:
            raise DomainError("log_rows must match the shape of rows")
        return self

    def log(self) -> np.ndarray:
        if self.log_rows is not None:
            return np.asarray(self.log_rows, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self.rows)

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    def to_dense(self) -> np.ndarray:
        """n x n matrix with a zero diagonal."""
        n = self.n
        dense = np.zeros((n, n))
        dense[~np.eye(n, dtype=bool)] = self.rows.ravel()
        return dense


class SneConsistency(BaseModel):
    discrete_cost: float = Field(..., description="Discrete alpha = 1 cost at the optimal gamma")
    sne_cost: float = Field(..., description="sum p log(p / normalized s)")
    difference: float


class CostDecomposition(BaseModel):
    attraction: float = Field(..., description="-sum p log s")
    repulsion: float = Field(..., description="sum gamma s; never depends on P")
    data_term: float = Field(..., description="Terms that depend on P and gamma only")
    total: float


class EmbeddingState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    Y: np.ndarray
    iteration: int = 0
    step: float
    momentum: float
    cost_trace: List[float] = Field(default_factory=list)
    rejected_steps: int = 0
    converged: bool = False


class Theorem6Row(BaseModel):
    n: int
    sne_cost_fitted_residual: float
    closed_form_value: float
    seed: int
    sne_cost_mean: float
    slope: float
    offset: float


class Theorem6Report(BaseModel):
    map_name: str
    perplexity: float
    radius: float
    rows: List[Theorem6Row] = Field(default_factory=list)


class DiscrepancyRunConfig(BaseModel):
    command: str = "discrepancy"
    map: Optional[str] = Field(default=None, description="Built-in map name")
    weights: Optional[str] = Field(default=None, description="MLP weights file")
    metric: str = "euclidean"
    alpha: float
    kernel: str = "gaussian"
    variant: Variant = Variant.CLOSED_FORM
    prior: str = "ball"
    radius: float = Field(default=3.0, gt=0.0)
    m: int = Field(default=64, ge=2)
    n: int = Field(default=1000, ge=10)
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_map_source(self) -> "DiscrepancyRunConfig":
        if (self.map is None) == (self.weights is None):
            raise ValueError("exactly one of --map or --weights is required")
        if self.kernel not in ("gaussian", "student"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.prior not in ("ball", "gaussian"):
            raise ValueError(f"unknown prior {self.prior!r}")
        return self


class ConformalRunConfig(BaseModel):
    command: str = "conformal"
    map: Optional[str] = None
    weights: Optional[str] = None
    metric: str = "euclidean"
    alpha: float = 1.0
    prior: str = "ball"
    radius: float = Field(default=3.0, gt=0.0)
    m: int = Field(default=64, ge=2)
    seed: int
    lambda_search: LambdaSearch = LambdaSearch.ANALYTIC_D1
    bracket: Tuple[float, float] = (1e-4, 1e4)
    tol: float = Field(default=1e-8, gt=0.0)

    @model_validator(mode="after")
    def check_map_source(self) -> "ConformalRunConfig":
        if (self.map is None) == (self.weights is None):
            raise ValueError("exactly one of --map or --weights is required")
        return self


class EmbedRunConfig(BaseModel):
    command: str = "embed"
    input: str
    output: Optional[str] = None
    trace_output: Optional[str] = None
    perplexity: float = Field(..., gt=1.0)
    dim: int = Field(default=2, ge=1)
    kernel: str = "student"
    alpha: float = 1.0
    gamma: Optional[float] = Field(default=None, gt=0.0)
    max_iter: int = Field(default=500, ge=1)
    step: float = Field(default=1.0, gt=0.0)
    step_mode: str = "adaptive"
    momentum: float = Field(default=0.5, ge=0.0, lt=1.0)
    seed: int

    @field_validator("step_mode")
    @classmethod
    def check_step_mode(cls, v: str) -> str:
        if v not in ("adaptive", "fixed"):
            raise ValueError(f"--step-mode must be 'adaptive' or 'fixed', got {v!r}")
        return v


class Theorem6RunConfig(BaseModel):
    command: str = "theorem6"
    map: str
    metric: str = "euclidean"
    radius: float = Field(default=3.0, gt=0.0)
    perplexity: float = Field(default=20.0, gt=1.0)
    n_list: List[int] = Field(default_factory=lambda: [128, 256, 512, 1024])
    seed: int
    seeds: int = Field(default=1, ge=1)

    @field_validator("n_list")
    @classmethod
    def check_n_list(cls, v: List[int]) -> List[int]:
        if not v or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"--n-list must be strictly increasing, got {v}")
        return v


class OracleRunConfig(BaseModel):
    command: str = "oracle"
    lower: float = -12.0
    upper: float = 12.0
    points: int = Field(default=8001, ge=3)
    precisions: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    alphas: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    tolerance: float = 1e-6


class OracleCase(BaseModel):
    precision: float
    alpha: float
    closed_form: float
    quadrature: float
    deviation: float
    normalization_ok: bool


class OracleReport(BaseModel):
    cases: List[OracleCase] = Field(default_factory=list)
    max_deviation: float = 0.0
    tolerance: float
    passed: bool = True
