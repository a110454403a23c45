"""The alpha-discrepancy of a smooth map.

For a map f with metric M on the observation space, every latent reference
point y0 carries two densities: the neighbourhood density p_y0, a Gaussian
whose precision is the pull-back metric A = J^T M J, and a latent
similarity s_y0 fixed by a kernel. The discrepancy is the expectation over
a latent prior of the gamma-minimized alpha-divergence between the two,
and it vanishes exactly when f is an isometry.

Four estimators share that definition:

- ``alpha_discrepancy``: closed form per reference point (Gaussian kernel,
  or the Student kernel at alpha = 1 up to an additive constant).
- ``empirical_alpha_discrepancy_Rp``: neighbours sampled from p_y0 with the
  auto-normalizer solved on the importance-weighted atoms.
- ``empirical_alpha_discrepancy_Rq``: neighbours sampled from the normalized
  kernel, density ratios p / q.
- ``conformal_alpha_discrepancy``: closed form minimized over the kernel
  precision lambda at every reference point.

All estimators report on the D_alpha(p : q) scale (q the normalized
kernel), so their values are directly comparable.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .contract import estimator_contract
from .exceptions import (
    AlphaDiscrepancyError,
    BracketError,
    DomainError,
    IndefiniteCombinationError,
    ReferencePointError,
    UnsupportedLimitError,
)
from .geometry import (
    LatentPrior,
    MetricField,
    SimilarityKernel,
    SmoothMap,
    gaussian_log_density,
    pullback_metric,
    regularize,
    sample_gaussian_precision,
)
from .measures import (
    alpha_divergence_quadrature,
    alpha_divergence_terms,
    alpha_divergence_weights,
    divergence_from_reduced,
    optimal_gamma_weights,
    reverse_kl_gamma,
)
from .models import (
    AlphaLike,
    AlphaParam,
    ConformalConfig,
    DiscrepancyEstimate,
    LambdaSearch,
    LambdaSummary,
    OracleCase,
    OracleReport,
    QuadratureGrid,
    Variant,
    as_alpha,
)
from .monitor import DegeneracyMonitor

logger = logging.getLogger(__name__)

UNDERFLOW_DENSITY = 1e-300
BRACKET_GRID_POINTS = 41
STUDENT_OFFSET = 1.0 + math.log(2.0)

# (value, skip reason); value is None when the point is skipped
PointResult = Tuple[Optional[float], str]


def _eigenvalues(A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"pull-back matrix must be square, got shape {A.shape}")
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    if eig[0] <= 0:
        raise DomainError(
            f"pull-back matrix is not positive definite (smallest eigenvalue {eig[0]!r})"
        )
    return eig


def _gaussian_closed_form(eig: np.ndarray, a: AlphaParam) -> float:
    d = eig.size
    alpha = a.alpha
    log_det = float(np.sum(np.log(eig)))
    if a.at_kl_limit:
        return 0.5 * log_det + 0.5 * float(np.sum(1.0 / eig)) - 0.5 * d
    if a.at_reverse_kl_limit:
        return -0.5 * log_det + 0.5 * float(np.sum(eig)) - 0.5 * d

    combined = alpha * eig + (1.0 - alpha)
    if np.any(combined <= 0):
        bad = int(np.argmin(combined))
        raise IndefiniteCombinationError(float(eig[bad]), alpha)
    log_b = 0.5 * alpha * log_det - 0.5 * float(np.sum(np.log(combined)))
    return -math.expm1(log_b) / (alpha * (1.0 - alpha))


def pointwise_discrepancy_closed_form(
    A: np.ndarray, alpha: AlphaLike, kernel: Optional[SimilarityKernel] = None
) -> float:
    """Closed-form alpha-divergence between G(. | y0, A) and the latent kernel.

    The Gaussian kernel gives

        1/(a(1-a)) [1 - |A|^(a/2) / |a A + (1-a) I|^(1/2)]

    with the limits D0 = -1/2 log|A| + 1/2 tr(A) - d/2 and
    D1 = 1/2 log|A| + 1/2 tr(A^-1) - d/2. A scaled Gaussian kernel of
    precision lam is the same formula applied to A / lam. The Student kernel
    only has an alpha = 1 form, 1/2 log|A| + tr(A^-1) - d/2 (1 + log 2),
    which is zero at A = 2I.

    Args:
        A: Symmetric positive definite d x d pull-back matrix
        alpha: Order of the divergence
        kernel: Latent similarity kernel (standard Gaussian by default)

    Returns:
        The point-wise discrepancy

    Raises:
        DomainError: If A is not positive definite
        IndefiniteCombinationError: If a A + (1 - a) I is not positive definite
        UnsupportedLimitError: For the Student kernel away from alpha = 1
    """
    a = as_alpha(alpha)
    kernel = kernel or SimilarityKernel.gaussian()
    eig = _eigenvalues(A)

    if not kernel.is_gaussian_family:
        if not a.at_kl_limit:
            raise UnsupportedLimitError(
                f"the Student kernel has a closed form only at alpha = 1, got {a.alpha}"
            )
        d = eig.size
        log_det = float(np.sum(np.log(eig)))
        return 0.5 * log_det + float(np.sum(1.0 / eig)) - 0.5 * d * STUDENT_OFFSET

    return _gaussian_closed_form(eig / kernel.precision, a)


def _check_inputs(f: SmoothMap, M: MetricField, prior: LatentPrior, m: int, seed: int) -> None:
    if m < 2:
        raise DomainError(f"need at least two reference points, got m={m}")
    if seed < 0:
        raise DomainError(f"seed must be nonnegative, got {seed}")
    if prior.dim != f.dim_in:
        raise DomainError(f"prior dimension {prior.dim} does not match latent dimension {f.dim_in}")
    if M.dimension != f.dim_out:
        raise DomainError(
            f"metric dimension {M.dimension} does not match observation dimension {f.dim_out}"
        )


def reference_points(prior: LatentPrior, m: int, seed: int) -> np.ndarray:
    """The m latent reference points an estimator with this seed averages over."""
    return prior.sampler(seed).sample(m)


def neighbour_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for reference point ``index``; scheduling cannot change it."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _map_references(
    references: np.ndarray,
    task: Callable[[int, np.ndarray], PointResult],
    workers: int,
) -> List[PointResult]:
    def guarded(index: int) -> PointResult:
        y0 = references[index]
        try:
            return task(index, y0)
        except ReferencePointError:
            raise
        except AlphaDiscrepancyError as e:
            raise ReferencePointError(y0, e) from e

    indices = range(len(references))
    if workers <= 1:
        return [guarded(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, indices))


def _reduce(
    results: Sequence[PointResult], monitor: DegeneracyMonitor
) -> Tuple[float, float, List[float]]:
    values = []
    for index, (value, reason) in enumerate(results):
        if value is None:
            monitor.record_skip(index, reason)
        else:
            values.append(value)
    monitor.check()
    arr = np.asarray(values)
    std_error = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std_error, values


@estimator_contract
def alpha_discrepancy(
    f: SmoothMap,
    M: MetricField,
    prior: LatentPrior,
    alpha: AlphaLike,
    kernel: Optional[SimilarityKernel] = None,
    m: int = 64,
    seed: int = 0,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """Average of the closed-form point-wise discrepancy over m prior draws.

    Raises:
        ReferencePointError: Wrapping rank-deficiency or indefinite-combination
            errors, with the offending reference point attached
    """
    a = as_alpha(alpha)
    kernel = kernel or SimilarityKernel.gaussian()
    _check_inputs(f, M, prior, m, seed)
    references = reference_points(prior, m, seed)

    def task(index: int, y0: np.ndarray) -> PointResult:
        A = pullback_metric(f, M, y0)
        return pointwise_discrepancy_closed_form(A, a, kernel), ""

    monitor = DegeneracyMonitor(m, "closed-form")
    value, std_error, pointwise = _reduce(_map_references(references, task, workers), monitor)
    return DiscrepancyEstimate(
        value=value,
        std_error=std_error,
        m=m,
        alpha=a.alpha,
        variant=Variant.CLOSED_FORM,
        seed=seed,
        skipped_points=monitor.skipped_points,
        pointwise=pointwise,
    )


def importance_weighted_divergence(
    p_hat: np.ndarray,
    s_hat: np.ndarray,
    alpha: AlphaLike,
    gamma: Optional[float] = None,
) -> Tuple[float, float]:
    """Alpha-divergence between the atoms p_hat / n and gamma * s_hat / n.

    With ``gamma=None`` the auto-normalizer is solved on the atoms
    themselves; at alpha = 0 that is the reverse-KL normalizer.

    Returns:
        (divergence, gamma)
    """
    a = as_alpha(alpha)
    n = len(p_hat)
    p_atoms = np.asarray(p_hat, dtype=float) / n
    s_atoms = np.asarray(s_hat, dtype=float) / n
    if gamma is None:
        if a.at_reverse_kl_limit:
            gamma = reverse_kl_gamma(p_atoms, s_atoms)
        else:
            gamma = optimal_gamma_weights(p_atoms, s_atoms, a.alpha, a.limit_tolerance)
    divergence = alpha_divergence_weights(p_atoms, gamma * s_atoms, a.alpha, a.limit_tolerance)
    return divergence, gamma


@estimator_contract
def empirical_alpha_discrepancy_Rp(
    f: SmoothMap,
    M: MetricField,
    prior: LatentPrior,
    alpha: AlphaLike,
    kernel: Optional[SimilarityKernel] = None,
    m: int = 64,
    n: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """Monte Carlo estimate with neighbours drawn from p_y0.

    Each neighbour carries p_hat = 1 and s_hat = s / p. The per-reference
    value is the gamma-minimized divergence between the atoms, mapped back
    to D_alpha(p : q) with ``divergence_from_reduced``. Reference points
    whose densities all underflow are skipped and counted.
    """
    a = as_alpha(alpha)
    kernel = kernel or SimilarityKernel.gaussian()
    _check_inputs(f, M, prior, m, seed)
    if n < 10:
        raise DomainError(f"need at least 10 neighbours per reference point, got n={n}")
    if not kernel.is_gaussian_family and not a.at_kl_limit:
        raise UnsupportedLimitError(
            f"the Student kernel is only supported at alpha = 1, got {a.alpha}"
        )
    references = reference_points(prior, m, seed)

    def task(index: int, y0: np.ndarray) -> PointResult:
        A = regularize(pullback_metric(f, M, y0))
        Y = sample_gaussian_precision(y0, A, n, neighbour_rng(seed, index))
        log_p = gaussian_log_density(y0, A, Y)
        log_s = kernel.log_from_sq_distance(np.sum((Y - y0) ** 2, axis=1))
        if np.all(log_p < math.log(UNDERFLOW_DENSITY)) or np.all(
            log_s < math.log(UNDERFLOW_DENSITY)
        ):
            return None, "densities underflow"

        # scale-free: the auto-normalizer absorbs any common factor of s_hat
        log_ratio = log_s - log_p
        s_hat = np.exp(log_ratio - np.max(log_ratio))
        reduced, gamma = importance_weighted_divergence(np.ones(n), s_hat, a)
        value = divergence_from_reduced(reduced, a.alpha, a.limit_tolerance)
        if not math.isfinite(value):
            return None, "non-finite divergence"
        logger.debug(f"R=p point {index}: gamma={gamma!r}, value={value!r}")
        return value, ""

    monitor = DegeneracyMonitor(m, "empirical-rp")
    value, std_error, pointwise = _reduce(_map_references(references, task, workers), monitor)
    return DiscrepancyEstimate(
        value=value,
        std_error=std_error,
        m=m,
        n=n,
        alpha=a.alpha,
        variant=Variant.EMPIRICAL_R_EQ_P,
        seed=seed,
        skipped_points=monitor.skipped_points,
        pointwise=pointwise,
    )


@estimator_contract
def empirical_alpha_discrepancy_Rq(
    f: SmoothMap,
    M: MetricField,
    prior: LatentPrior,
    alpha: AlphaLike,
    kernel: Optional[SimilarityKernel] = None,
    m: int = 64,
    n: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """Monte Carlo estimate with neighbours y = y0 + eps drawn from the normalized kernel.

    With r = p / q the per-reference value is
    mean[a r + (1 - a) - r^a] / (a (1 - a)), or mean[r log r - r + 1] and
    mean[-log r + r - 1] at the limits.
    """
    a = as_alpha(alpha)
    kernel = kernel or SimilarityKernel.gaussian()
    _check_inputs(f, M, prior, m, seed)
    if n < 10:
        raise DomainError(f"need at least 10 neighbours per reference point, got n={n}")
    if not kernel.is_gaussian_family:
        raise DomainError("sampling from the kernel needs the Gaussian kernel family")
    references = reference_points(prior, m, seed)
    log_normalizer = math.log(kernel.normalizer(f.dim_in))

    def task(index: int, y0: np.ndarray) -> PointResult:
        A = regularize(pullback_metric(f, M, y0))
        Y = kernel.sample_normalized(y0, n, neighbour_rng(seed, index))
        log_p = gaussian_log_density(y0, A, Y)
        if np.all(log_p < math.log(UNDERFLOW_DENSITY)):
            return None, "densities underflow"
        log_q = kernel.log_from_sq_distance(np.sum((Y - y0) ** 2, axis=1)) - log_normalizer
        with np.errstate(over="ignore"):
            r = np.exp(log_p - log_q)
        value = float(np.mean(alpha_divergence_terms(r, 1.0, a.alpha, a.limit_tolerance)))
        if not math.isfinite(value):
            return None, "non-finite divergence"
        return value, ""

    monitor = DegeneracyMonitor(m, "empirical-rq")
    value, std_error, pointwise = _reduce(_map_references(references, task, workers), monitor)
    return DiscrepancyEstimate(
        value=value,
        std_error=std_error,
        m=m,
        n=n,
        alpha=a.alpha,
        variant=Variant.EMPIRICAL_R_EQ_Q,
        seed=seed,
        skipped_points=monitor.skipped_points,
        pointwise=pointwise,
    )


def _golden_lambda(A_eig: np.ndarray, a: AlphaParam, cfg: ConformalConfig) -> float:
    def objective(log_lam: float) -> float:
        try:
            return _gaussian_closed_form(A_eig / math.exp(log_lam), a)
        except IndefiniteCombinationError:
            return math.inf

    low, high = (math.log(b) for b in cfg.bracket)
    grid = np.linspace(low, high, BRACKET_GRID_POINTS)
    values = np.array([objective(t) for t in grid])
    best = int(np.argmin(values))
    if best == 0 or best == len(grid) - 1 or not math.isfinite(values[best]):
        raise BracketError(
            f"no interior minimum over lambda in {cfg.bracket}; the objective is "
            "monotone there, widen the bracket"
        )
    result = minimize_scalar(
        objective,
        bracket=(grid[best - 1], grid[best], grid[best + 1]),
        method="golden",
        tol=cfg.tol,
    )
    return float(math.exp(result.x))


def optimal_precision(
    A: np.ndarray, alpha: AlphaLike, cfg: Optional[ConformalConfig] = None
) -> float:
    """Kernel precision lambda minimizing the point-wise discrepancy.

    The analytic path covers the two limits, lambda = d / tr(A^-1) at
    alpha = 1 and lambda = tr(A) / d at alpha = 0; other orders (or a
    golden-section configuration) search log lambda over the bracket.

    Raises:
        BracketError: If the bracket holds no interior minimum
    """
    a = as_alpha(alpha)
    cfg = cfg or ConformalConfig()
    eig = _eigenvalues(A)
    if cfg.lambda_search == LambdaSearch.ANALYTIC_D1:
        if a.at_kl_limit:
            return float(eig.size / np.sum(1.0 / eig))
        if a.at_reverse_kl_limit:
            return float(np.sum(eig) / eig.size)
    return _golden_lambda(eig, a, cfg)


@estimator_contract
def conformal_alpha_discrepancy(
    f: SmoothMap,
    M: MetricField,
    prior: LatentPrior,
    alpha: AlphaLike,
    m: int = 64,
    cfg: Optional[ConformalConfig] = None,
    seed: int = 0,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """Discrepancy with the kernel exp(-lam/2 |y - y0|^2), lam optimized per reference point.

    gamma is already eliminated analytically inside the closed form, so
    only lam is searched. The estimate records lam* per point and a
    summary of lam* and the bandwidth 1/lam*.
    """
    a = as_alpha(alpha)
    cfg = cfg or ConformalConfig()
    _check_inputs(f, M, prior, m, seed)
    references = reference_points(prior, m, seed)
    lambdas: List[float] = [math.nan] * m

    def task(index: int, y0: np.ndarray) -> PointResult:
        A = pullback_metric(f, M, y0)
        lam = optimal_precision(A, a, cfg)
        lambdas[index] = lam
        kernel = SimilarityKernel.scaled_gaussian(lam)
        return pointwise_discrepancy_closed_form(A, a, kernel), ""

    monitor = DegeneracyMonitor(m, "conformal")
    value, std_error, pointwise = _reduce(_map_references(references, task, workers), monitor)
    lam = np.asarray(lambdas)
    bandwidth = 1.0 / lam
    summary = LambdaSummary(
        lambda_min=float(lam.min()),
        lambda_mean=float(lam.mean()),
        lambda_max=float(lam.max()),
        bandwidth_min=float(bandwidth.min()),
        bandwidth_mean=float(bandwidth.mean()),
        bandwidth_max=float(bandwidth.max()),
    )
    logger.info(
        f"conformal lambda* in [{summary.lambda_min:.6g}, {summary.lambda_max:.6g}], "
        f"mean {summary.lambda_mean:.6g}"
    )
    return DiscrepancyEstimate(
        value=value,
        std_error=std_error,
        m=m,
        alpha=a.alpha,
        variant=Variant.CONFORMAL,
        seed=seed,
        skipped_points=monitor.skipped_points,
        lambda_summary=summary,
        pointwise=pointwise,
        lambda_star=lambdas,
    )


def _centred_density(precision: float) -> Callable[[np.ndarray], np.ndarray]:
    def density(x: np.ndarray) -> np.ndarray:
        return np.exp(gaussian_log_density([0.0], [[precision]], np.asarray(x).reshape(-1, 1)))

    return density


def quadrature_cross_check(
    precisions: Sequence[float],
    alphas: Sequence[float],
    grid: Optional[QuadratureGrid] = None,
    tolerance: float = 1e-6,
) -> OracleReport:
    """Closed form against trapezoid quadrature on 1-D Gaussians.

    For each precision a the neighbourhood density is N(0, 1/a) and the
    kernel the standard normal.
    """
    grid = grid or QuadratureGrid.line(-12.0, 12.0, 8001)
    report = OracleReport(tolerance=tolerance)

    for precision in precisions:
        A = np.array([[float(precision)]])
        for alpha in alphas:
            closed = pointwise_discrepancy_closed_form(A, alpha)
            result = alpha_divergence_quadrature(
                _centred_density(float(precision)), _centred_density(1.0), grid, alpha
            )
            deviation = abs(closed - result.value)
            report.cases.append(
                OracleCase(
                    precision=float(precision),
                    alpha=float(alpha),
                    closed_form=closed,
                    quadrature=result.value,
                    deviation=deviation,
                    normalization_ok=result.normalization_ok,
                )
            )
            report.max_deviation = max(report.max_deviation, deviation)

    report.passed = report.max_deviation <= tolerance
    if not report.passed:
        logger.warning(
            f"closed form and quadrature differ by {report.max_deviation:.3e} > {tolerance:g}"
        )
    return report
