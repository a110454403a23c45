"""Smooth maps, metric fields, pull-back metrics, neighbourhood densities and kernels."""

import copy
import logging
import math
from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import linalg
from typing_extensions import TypeAlias

from .exceptions import (
    DomainError,
    NonFiniteMapError,
    RankDeficiencyError,
    WeightsParseError,
)

logger = logging.getLogger(__name__)

Point: TypeAlias = Union[np.ndarray, Sequence[float], float]

RANK_TOLERANCE = 1e-10
REGULARIZATION = 1e-10


def _as_point(y: Point) -> np.ndarray:
    return np.atleast_1d(np.asarray(y, dtype=float))


class JacobianMode(str, Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"


def default_step(y0: np.ndarray) -> float:
    """Central-difference step eps^(1/3) * (1 + |y0|)."""
    return float(np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.linalg.norm(y0)))


def finite_difference_jacobian(
    f: "SmoothMap", y0: Point, h: Optional[float] = None
) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``y0`` (shape D x d).

    Column i is (f(y0 + h e_i) - f(y0 - h e_i)) / (2h).

    Raises:
        DomainError: If h is not positive
        NonFiniteMapError: If the map returns a non-finite value
    """
    y0 = _as_point(y0)
    if h is None:
        h = default_step(y0)
    if not h > 0:
        raise DomainError(f"finite-difference step must be positive, got {h}")

    J = np.empty((f.dim_out, f.dim_in))
    for i in range(f.dim_in):
        step = np.zeros_like(y0)
        step[i] = h
        forward = np.asarray(f.evaluate(y0 + step), dtype=float)
        backward = np.asarray(f.evaluate(y0 - step), dtype=float)
        if not (np.all(np.isfinite(forward)) and np.all(np.isfinite(backward))):
            raise NonFiniteMapError(i, y0)
        J[:, i] = (forward - backward) / (2.0 * h)
    return J


class SmoothMap(ABC):
    """A smooth map y -> x from a d-dimensional latent space into R^D (D >= d)."""

    def __init__(
        self,
        dim_in: int,
        dim_out: int,
        name: str,
        jacobian_mode: JacobianMode = JacobianMode.ANALYTIC,
        fd_step: Optional[float] = None,
    ) -> None:
        if dim_out < dim_in:
            raise DomainError(
                f"{name}: observation dimension {dim_out} is below latent dimension {dim_in}"
            )
        self._dim_in = dim_in
        self._dim_out = dim_out
        self._name = name
        self._jacobian_mode = jacobian_mode
        self._fd_step = fd_step

    @property
    def dim_in(self) -> int:
        return self._dim_in

    @property
    def dim_out(self) -> int:
        return self._dim_out

    @property
    def name(self) -> str:
        return self._name

    @property
    def jacobian_mode(self) -> JacobianMode:
        return self._jacobian_mode

    @abstractmethod
    def evaluate(self, y: Point) -> np.ndarray:
        """Map a latent point to the observation space."""

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        raise NotImplementedError(f"{self._name} has no analytic Jacobian")

    def jacobian(self, y: Point) -> np.ndarray:
        if self._jacobian_mode == JacobianMode.FINITE_DIFFERENCE:
            return finite_difference_jacobian(self, y, self._fd_step)
        return self.analytic_jacobian(y)

    def evaluate_many(self, Y: np.ndarray) -> np.ndarray:
        return np.stack([self.evaluate(y) for y in np.atleast_2d(Y)])

    def with_finite_differences(self, h: Optional[float] = None) -> "SmoothMap":
        clone = copy.copy(self)
        clone._jacobian_mode = JacobianMode.FINITE_DIFFERENCE
        clone._fd_step = h
        return clone

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self._name!r}, d={self._dim_in}, D={self._dim_out})"


class LinearMap(SmoothMap):
    def __init__(
        self, matrix: np.ndarray, offset: Optional[np.ndarray] = None, name: str = "linear"
    ) -> None:
        matrix = np.array(matrix, dtype=float, ndmin=2)
        super().__init__(matrix.shape[1], matrix.shape[0], name)
        self._matrix = matrix
        self._matrix.setflags(write=False)
        self._offset = np.zeros(matrix.shape[0]) if offset is None else np.asarray(offset, float)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def evaluate(self, y: Point) -> np.ndarray:
        return self._matrix @ _as_point(y) + self._offset

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        return self._matrix.copy()


class FunctionMap(SmoothMap):
    """Wraps plain callables; without a Jacobian callable it differentiates numerically."""

    def __init__(
        self,
        evaluate: Callable[[np.ndarray], np.ndarray],
        dim_in: int,
        dim_out: int,
        jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "function",
    ) -> None:
        mode = JacobianMode.ANALYTIC if jacobian is not None else JacobianMode.FINITE_DIFFERENCE
        super().__init__(dim_in, dim_out, name, jacobian_mode=mode)
        self._evaluate = evaluate
        self._jacobian = jacobian

    def evaluate(self, y: Point) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._evaluate(_as_point(y)), dtype=float))

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        if self._jacobian is None:
            return super().analytic_jacobian(y)
        return np.atleast_2d(np.asarray(self._jacobian(_as_point(y)), dtype=float))


class PolarChart(SmoothMap):
    """(r, theta) -> (r cos theta, r sin theta); a change of coordinates of the plane."""

    def __init__(self) -> None:
        super().__init__(2, 2, "polar")

    def evaluate(self, y: Point) -> np.ndarray:
        r, theta = _as_point(y)
        return np.array([r * math.cos(theta), r * math.sin(theta)])

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        r, theta = _as_point(y)
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -r * s], [s, r * c]])


class SwissRoll(SmoothMap):
    """(u, v) -> (t cos t, v, t sin t) with t = u + offset."""

    def __init__(self, offset: float = 2.0 * math.pi) -> None:
        super().__init__(2, 3, "swiss-roll")
        self._offset = offset

    def evaluate(self, y: Point) -> np.ndarray:
        u, v = _as_point(y)
        t = u + self._offset
        return np.array([t * math.cos(t), v, t * math.sin(t)])

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        u, _ = _as_point(y)
        t = u + self._offset
        return np.array(
            [
                [math.cos(t) - t * math.sin(t), 0.0],
                [0.0, 1.0],
                [math.sin(t) + t * math.cos(t), 0.0],
            ]
        )


class Cylinder(SmoothMap):
    """(u, v) -> (cos u, sin u, v): a curved but isometric embedding."""

    def __init__(self) -> None:
        super().__init__(2, 3, "cylinder")

    def evaluate(self, y: Point) -> np.ndarray:
        u, v = _as_point(y)
        return np.array([math.cos(u), math.sin(u), v])

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        u, _ = _as_point(y)
        return np.array([[-math.sin(u), 0.0], [math.cos(u), 0.0], [0.0, 1.0]])


class TanhMLP(SmoothMap):
    """Multilayer perceptron with tanh hidden units and a linear output layer.

    ``layers`` is a list of (W, b) pairs applied in order; W has shape
    (rows, cols) and maps a cols-vector to a rows-vector.
    """

    def __init__(self, layers: List[Tuple[np.ndarray, np.ndarray]], name: str = "mlp") -> None:
        if not layers:
            raise DomainError("an MLP needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k][0].shape[1] != layers[k - 1][0].shape[0]:
                raise DomainError(
                    f"layer {k + 1} expects {layers[k][0].shape[1]} inputs but layer {k} "
                    f"produces {layers[k - 1][0].shape[0]}"
                )
        super().__init__(layers[0][0].shape[1], layers[-1][0].shape[0], name)
        self._layers = [(np.asarray(W, float), np.asarray(b, float)) for W, b in layers]

    @property
    def layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return [(W.copy(), b.copy()) for W, b in self._layers]

    def _forward(self, y: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        activations = []
        a = y
        for W, b in self._layers[:-1]:
            a = np.tanh(W @ a + b)
            activations.append(a)
        W, b = self._layers[-1]
        return W @ a + b, activations

    def evaluate(self, y: Point) -> np.ndarray:
        return self._forward(_as_point(y))[0]

    def analytic_jacobian(self, y: Point) -> np.ndarray:
        _, activations = self._forward(_as_point(y))
        J = np.eye(self.dim_in)
        for (W, _), a in zip(self._layers[:-1], activations):
            J = (1.0 - a**2)[:, None] * (W @ J)
        return self._layers[-1][0] @ J


def load_mlp_weights(path: Union[str, Path]) -> TanhMLP:
    """Parse a layered weights file into a TanhMLP.

    Format (blank lines and ``#`` comments are ignored)::

        layers: k
        rows cols          # layer 1
        w11 w12 ... w1c    # `rows` lines of `cols` values
        ...
        b1 ... b_rows      # bias line
        rows cols          # layer 2
        ...

    Raises:
        WeightsParseError: On any malformed line, with its line number
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise WeightsParseError(0, "file", f"cannot read {path}: {e}") from e

    lines = []
    for number, text in enumerate(raw, start=1):
        text = text.split("#", 1)[0].strip()
        if text:
            lines.append((number, text))
    cursor = iter(lines)

    def next_line(field: str) -> Tuple[int, str]:
        try:
            return next(cursor)
        except StopIteration:
            last = lines[-1][0] if lines else 0
            raise WeightsParseError(last + 1, field, "unexpected end of file") from None

    def floats(number: int, text: str, field: str, count: int) -> np.ndarray:
        tokens = text.replace(",", " ").split()
        if len(tokens) != count:
            raise WeightsParseError(number, field, f"expected {count} values, found {len(tokens)}")
        values = []
        for position, token in enumerate(tokens):
            try:
                values.append(float(token))
            except ValueError:
                raise WeightsParseError(
                    number, f"{field}[{position}]", f"not a decimal number: {token!r}"
                ) from None
        return np.array(values)

    number, header = next_line("header")
    key, _, value = header.partition(":")
    if key.strip() != "layers" or not value.strip().isdigit() or int(value) < 1:
        raise WeightsParseError(number, "header", f"expected 'layers: k', found {header!r}")
    n_layers = int(value)

    layers = []
    for k in range(1, n_layers + 1):
        number, shape_text = next_line(f"layer {k} shape")
        shape = shape_text.split()
        if len(shape) != 2 or not all(token.isdigit() and int(token) > 0 for token in shape):
            raise WeightsParseError(
                number, f"layer {k} shape", f"expected 'rows cols', found {shape_text!r}"
            )
        rows, cols = int(shape[0]), int(shape[1])
        W = np.empty((rows, cols))
        for r in range(rows):
            number, text = next_line(f"layer {k} weights row {r + 1}")
            W[r] = floats(number, text, f"layer {k} weights row {r + 1}", cols)
        number, text = next_line(f"layer {k} bias")
        b = floats(number, text, f"layer {k} bias", rows)
        layers.append((W, b))

    leftover = next(cursor, None)
    if leftover is not None:
        raise WeightsParseError(leftover[0], "trailing", "content after the last layer")

    try:
        mlp = TanhMLP(layers, name=f"mlp:{path.name}")
    except DomainError as e:
        raise WeightsParseError(0, "layers", str(e)) from e
    logger.info(f"Loaded MLP {path} with layer sizes {[W.shape for W, _ in layers]}")
    return mlp


def write_mlp_weights(path: Union[str, Path], layers: List[Tuple[np.ndarray, np.ndarray]]) -> None:
    """Write layers in the format read by ``load_mlp_weights`` (round-trip exact)."""
    out = [f"layers: {len(layers)}"]
    for W, b in layers:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        out.append(f"{W.shape[0]} {W.shape[1]}")
        out.extend(" ".join(repr(float(v)) for v in row) for row in W)
        out.append(" ".join(repr(float(v)) for v in np.ravel(b)))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


class MetricField(ABC):
    """x -> M(x), a symmetric positive definite D x D matrix on the observation space."""

    def __init__(self, dimension: int) -> None:
        self._dimension = dimension

    @property
    def dimension(self) -> int:
        return self._dimension

    @abstractmethod
    def _matrix(self, x: np.ndarray) -> np.ndarray: ...

    def evaluate(self, x: Point) -> np.ndarray:
        M = np.atleast_2d(np.asarray(self._matrix(_as_point(x)), dtype=float))
        if M.shape != (self._dimension, self._dimension):
            raise DomainError(f"metric returned shape {M.shape}, expected D={self._dimension}")
        return 0.5 * (M + M.T)


class EuclideanMetric(MetricField):
    def _matrix(self, x: np.ndarray) -> np.ndarray:
        return np.eye(self._dimension)


class ConstantMetric(MetricField):
    def __init__(self, matrix: np.ndarray) -> None:
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        super().__init__(matrix.shape[0])
        self._constant = 0.5 * (matrix + matrix.T)

    def _matrix(self, x: np.ndarray) -> np.ndarray:
        return self._constant


class FunctionMetric(MetricField):
    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dimension: int) -> None:
        super().__init__(dimension)
        self._fn = fn

    def _matrix(self, x: np.ndarray) -> np.ndarray:
        return self._fn(x)


class LinearReparametrization:
    """An invertible change of observation coordinates x' = Phi x."""

    def __init__(self, phi: np.ndarray) -> None:
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        if phi.shape[0] != phi.shape[1]:
            raise DomainError(f"re-parametrization must be square, got {phi.shape}")
        if np.linalg.cond(phi) > 1e12:
            raise DomainError("re-parametrization matrix is not invertible")
        self._phi = phi
        self._phi_inv = np.linalg.inv(phi)

    def compose(self, f: SmoothMap) -> SmoothMap:
        """phi o f, with Jacobian Phi J_f."""
        phi = self._phi
        return FunctionMap(
            lambda y: phi @ f.evaluate(y),
            f.dim_in,
            f.dim_out,
            jacobian=lambda y: phi @ f.jacobian(y),
            name=f"reparam({f.name})",
        )

    def transport(self, metric: MetricField) -> MetricField:
        """M'(x') = Phi^-T M(Phi^-1 x') Phi^-1."""
        inv = self._phi_inv
        return FunctionMetric(lambda x: inv.T @ metric.evaluate(inv @ x) @ inv, metric.dimension)


def regularize(A: np.ndarray) -> np.ndarray:
    """A + eps I with eps = 1e-10 tr(A) / d, applied before any Cholesky."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    eps = REGULARIZATION * float(np.trace(A)) / d
    return A + max(eps, 0.0) * np.eye(d)


def pullback_metric(f: SmoothMap, M: MetricField, y0: Point) -> np.ndarray:
    """Pull-back metric J^T M(f(y0)) J, symmetrized.

    Raises:
        RankDeficiencyError: If the Jacobian is not of full column rank
    """
    y0 = _as_point(y0)
    J = np.atleast_2d(f.jacobian(y0))
    singular = np.linalg.svd(J, compute_uv=False)
    if singular[0] == 0 or singular[-1] < RANK_TOLERANCE * singular[0]:
        raise RankDeficiencyError(float(singular[-1]), float(singular[0]))
    A = J.T @ M.evaluate(f.evaluate(y0)) @ J
    return 0.5 * (A + A.T)


def _precision_cholesky(precision: np.ndarray) -> np.ndarray:
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    try:
        return linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError as e:
        raise DomainError("precision matrix is not positive definite") from e


def gaussian_log_density(y0: Point, precision: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Log of G(y | y0, precision) for each row of ``Y``."""
    y0 = _as_point(y0)
    L = _precision_cholesky(precision)
    d = L.shape[0]
    Y = np.asarray(Y, dtype=float).reshape(-1, d)
    z = (Y - y0) @ L
    half_logdet = float(np.sum(np.log(np.diag(L))))
    return half_logdet - 0.5 * d * math.log(2.0 * math.pi) - 0.5 * np.sum(z * z, axis=1)


def gaussian_neighborhood_density(y0: Point, precision: np.ndarray, y: Point) -> float:
    """Normalized Gaussian density centred at y0 with the given precision matrix.

    Raises:
        DomainError: If the precision is not positive definite
    """
    return float(np.exp(gaussian_log_density(y0, precision, _as_point(y))[0]))


def sample_gaussian_precision(
    y0: Point, precision: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n draws from G(. | y0, precision): y0 + L^-T z with precision = L L^T."""
    y0 = _as_point(y0)
    L = _precision_cholesky(precision)
    z = rng.standard_normal((n, L.shape[0]))
    return y0 + linalg.solve_triangular(L.T, z.T, lower=False).T


class KernelKind(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT = "student"
    SCALED_GAUSSIAN = "scaled-gaussian"


class SimilarityKernel(BaseModel):
    """Isotropic latent similarity s_y0(y), equal to 1 at y = y0."""

    kind: KernelKind = KernelKind.GAUSSIAN
    lam: float = Field(default=1.0, gt=0.0, description="Precision of the scaled Gaussian")

    @classmethod
    def gaussian(cls) -> "SimilarityKernel":
        return cls(kind=KernelKind.GAUSSIAN)

    @classmethod
    def student(cls) -> "SimilarityKernel":
        return cls(kind=KernelKind.STUDENT)

    @classmethod
    def scaled_gaussian(cls, lam: float) -> "SimilarityKernel":
        return cls(kind=KernelKind.SCALED_GAUSSIAN, lam=lam)

    @property
    def is_gaussian_family(self) -> bool:
        return self.kind != KernelKind.STUDENT

    @property
    def precision(self) -> float:
        if not self.is_gaussian_family:
            raise DomainError("the Student kernel has no Gaussian precision")
        return self.lam if self.kind == KernelKind.SCALED_GAUSSIAN else 1.0

    def from_sq_distance(self, d2: np.ndarray) -> np.ndarray:
        d2 = np.asarray(d2, dtype=float)
        if self.is_gaussian_family:
            return np.exp(-0.5 * self.precision * d2)
        return 1.0 / (1.0 + d2)

    def log_from_sq_distance(self, d2: np.ndarray) -> np.ndarray:
        d2 = np.asarray(d2, dtype=float)
        if self.is_gaussian_family:
            return -0.5 * self.precision * d2
        return -np.log1p(d2)

    def derivative_wrt_sq_distance(self, d2: np.ndarray) -> np.ndarray:
        """d s / d(|y - y0|^2)."""
        return self.from_sq_distance(d2) * self.log_derivative_wrt_sq_distance(d2)

    def log_derivative_wrt_sq_distance(self, d2: np.ndarray) -> np.ndarray:
        """d log s / d(|y - y0|^2); finite where s itself underflows."""
        d2 = np.asarray(d2, dtype=float)
        if self.is_gaussian_family:
            return np.full_like(d2, -0.5 * self.precision)
        return -1.0 / (1.0 + d2)

    def evaluate(self, y0: Point, y: Union[Point, np.ndarray]) -> Union[float, np.ndarray]:
        y0 = _as_point(y0)
        Y = np.asarray(y, dtype=float)
        if Y.ndim <= 1:
            return float(self.from_sq_distance(np.sum((_as_point(Y) - y0) ** 2)))
        return self.from_sq_distance(np.sum((Y - y0) ** 2, axis=1))

    def normalizer(self, d: int) -> float:
        """Integral of s_y0 over R^d."""
        if self.is_gaussian_family:
            return (2.0 * math.pi / self.precision) ** (d / 2.0)
        if d == 1:
            return math.pi
        raise DomainError(f"the Student kernel is not integrable in dimension {d}")

    def sample_normalized(self, y0: Point, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draws y = y0 + eps from the normalized kernel (Gaussian family only)."""
        if not self.is_gaussian_family:
            raise DomainError("only the Gaussian kernel family can be sampled")
        y0 = _as_point(y0)
        return y0 + rng.standard_normal((n, y0.size)) / math.sqrt(self.precision)


class PriorKind(str, Enum):
    UNIFORM_BALL = "uniform-ball"
    GAUSSIAN = "gaussian"
    EMPIRICAL = "empirical"


class LatentPrior(BaseModel):
    kind: PriorKind
    dim: int = Field(..., ge=1)
    radius: float = Field(default=3.0, gt=0.0)
    mean: Optional[List[float]] = None
    covariance: Optional[List[List[float]]] = None
    points: Optional[List[List[float]]] = None

    @field_validator("points")
    @classmethod
    def validate_points(cls, v: Optional[List[List[float]]]) -> Optional[List[List[float]]]:
        if v is not None and len(v) == 0:
            raise DomainError("an empirical prior needs at least one point")
        return v

    @model_validator(mode="after")
    def check_kind(self) -> "LatentPrior":
        if self.kind == PriorKind.GAUSSIAN:
            if self.mean is None:
                self.mean = [0.0] * self.dim
            if self.covariance is None:
                self.covariance = np.eye(self.dim).tolist()
        if self.kind == PriorKind.EMPIRICAL and self.points is None:
            raise DomainError("an empirical prior needs points")
        return self

    @classmethod
    def uniform_ball(cls, dim: int, radius: float = 3.0) -> "LatentPrior":
        return cls(kind=PriorKind.UNIFORM_BALL, dim=dim, radius=radius)

    @classmethod
    def gaussian(cls, mean: Sequence[float], covariance: np.ndarray) -> "LatentPrior":
        return cls(
            kind=PriorKind.GAUSSIAN,
            dim=len(mean),
            mean=[float(v) for v in mean],
            covariance=np.asarray(covariance, dtype=float).tolist(),
        )

    @classmethod
    def empirical(cls, points: np.ndarray) -> "LatentPrior":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(kind=PriorKind.EMPIRICAL, dim=points.shape[1], points=points.tolist())

    def sampler(self, seed: Union[int, np.random.SeedSequence, None]) -> "PriorSampler":
        return PriorSampler(self, np.random.default_rng(seed))


class PriorSampler:
    """Owns its RNG; use one sampler per thread of execution."""

    def __init__(self, prior: LatentPrior, rng: np.random.Generator) -> None:
        self._prior = prior
        self._rng = rng

    def sample(self, m: int) -> np.ndarray:
        prior = self._prior
        if prior.kind == PriorKind.UNIFORM_BALL:
            return self._sample_ball(m)
        if prior.kind == PriorKind.GAUSSIAN:
            return self._rng.multivariate_normal(
                np.asarray(prior.mean), np.asarray(prior.covariance), size=m
            )
        points = np.asarray(prior.points, dtype=float)
        return points[self._rng.integers(0, len(points), size=m)]

    def _sample_ball(self, m: int) -> np.ndarray:
        # rejection sampling inside the bounding cube
        d, r = self._prior.dim, self._prior.radius
        accepted: List[np.ndarray] = []
        count = 0
        while count < m:
            batch = self._rng.uniform(-r, r, size=(max(2 * (m - count), 16), d))
            batch = batch[np.sum(batch**2, axis=1) <= r * r]
            accepted.append(batch)
            count += len(batch)
        return np.concatenate(accepted)[:m]


def _rotation(theta: float) -> np.ndarray:
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


def builtin_test_maps(weights_path: Optional[Union[str, Path]] = None) -> Dict[str, SmoothMap]:
    """Catalog of maps with analytic Jacobians, keyed by stable names."""
    random_linear = np.random.default_rng(20180517).standard_normal((3, 2))
    isometric_plane = np.linalg.qr(np.array([[1.0, 0.5], [0.0, 1.0], [2.0, -1.0]]))[0]
    maps: Dict[str, SmoothMap] = {
        "identity-1d": LinearMap(np.eye(1), name="identity-1d"),
        "identity-2d": LinearMap(np.eye(2), name="identity-2d"),
        # pull-back metric 2 in one dimension, 4I in two
        "scale2-1d": LinearMap(math.sqrt(2.0) * np.eye(1), name="scale2-1d"),
        "scale2-2d": LinearMap(2.0 * np.eye(2), name="scale2-2d"),
        "isometric-curve": LinearMap(np.array([[1.0], [0.0]]), name="isometric-curve"),
        "isometric-plane": LinearMap(isometric_plane, name="isometric-plane"),
        "cylinder": Cylinder(),
        "conformal3": LinearMap(3.0 * _rotation(math.pi / 5.0), name="conformal3"),
        "anisotropic": LinearMap(np.diag([1.0, 4.0]), name="anisotropic"),
        "linear-random": LinearMap(random_linear, name="linear-random"),
        "polar": PolarChart(),
        "swiss-roll": SwissRoll(),
    }
    if weights_path is not None:
        maps["mlp"] = load_mlp_weights(weights_path)
    return maps


ISOMETRIC_MAPS = ("identity-1d", "identity-2d", "isometric-curve", "isometric-plane", "cylinder")


def builtin_map(name: str) -> SmoothMap:
    maps = builtin_test_maps()
    if name not in maps:
        raise DomainError(f"unknown map {name!r}; choose from {sorted(maps)}")
    return maps[name]


def builtin_metric(name: str, dimension: int) -> MetricField:
    """``euclidean`` or ``isotropic:<c>`` (c times the identity)."""
    if name == "euclidean":
        return EuclideanMetric(dimension)
    kind, _, value = name.partition(":")
    if kind == "isotropic":
        try:
            scale = float(value)
        except ValueError:
            raise DomainError(f"bad metric scale in {name!r}") from None
        if not scale > 0:
            raise DomainError(f"metric scale must be positive in {name!r}")
        return ConstantMetric(scale * np.eye(dimension))
    raise DomainError(f"unknown metric {name!r}")
