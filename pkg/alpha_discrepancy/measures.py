"""Alpha-divergence between positive measures.

The family is

    D_a(p : q) = 1/(a(1-a)) * sum[a p + (1-a) q - p^a q^(1-a)]

over the atoms of two positive measures (not necessarily normalized). The
limits a -> 1 and a -> 0 are the KL and reverse KL divergences; they are
evaluated with their closed limit formulas whenever alpha lies within
``limit_tolerance`` of the limit. Conventions: 0 log 0 = 0, and mass on an
atom the other measure does not charge gives ``math.inf`` where the
divergence is unbounded (p > 0 = q at a >= 1, q > 0 = p at a <= 0).
"""

import logging
import math
from typing import Callable, Union

import numpy as np
from scipy import linalg
from scipy.integrate import trapezoid

from .exceptions import DomainError, SupportMismatchError, UnsupportedLimitError
from .models import (
    AlphaLike,
    PositiveMeasure,
    QuadratureGrid,
    QuadratureResult,
    as_alpha,
)

logger = logging.getLogger(__name__)

DEFAULT_LIMIT_TOLERANCE = 1e-6
NORMALIZATION_TOLERANCE = 1e-6

ArrayLike = Union[np.ndarray, list]


def alpha_divergence_terms(
    p: ArrayLike,
    q: ArrayLike,
    alpha: float,
    limit_tolerance: float = DEFAULT_LIMIT_TOLERANCE,
) -> np.ndarray:
    """Per-atom integrand of D_alpha(p : q), broadcasting p against q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p, q = np.broadcast_arrays(p, q)
    both_zero = (p == 0) & (q == 0)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if abs(1.0 - alpha) <= limit_tolerance:
            plogpq = np.where(p > 0, p * np.log(p / q), 0.0)
            terms = plogpq - p + q
            terms = np.where((p > 0) & (q == 0), np.inf, terms)
        elif abs(alpha) <= limit_tolerance:
            qlogqp = np.where(q > 0, q * np.log(q / p), 0.0)
            terms = qlogqp - q + p
            terms = np.where((q > 0) & (p == 0), np.inf, terms)
        else:
            mixed = _mixed_power(p, q, alpha)
            terms = (alpha * p + (1.0 - alpha) * q - mixed) / (alpha * (1.0 - alpha))
            p_only = (p > 0) & (q == 0)
            q_only = (q > 0) & (p == 0)
            terms = np.where(p_only, np.inf if alpha >= 1.0 else p / (1.0 - alpha), terms)
            terms = np.where(q_only, np.inf if alpha <= 0.0 else q / alpha, terms)

    return np.where(both_zero, 0.0, terms)


def _mixed_power(p: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    # p^a q^(1-a) through logs; atoms with p = q = 0 contribute nothing
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mixed = np.exp(alpha * np.log(p) + (1.0 - alpha) * np.log(q))
    return np.where((p == 0) & (q == 0), 0.0, mixed)


def hellinger_integral(p: ArrayLike, q: ArrayLike, alpha: float) -> float:
    """Sum of p^alpha q^(1-alpha): what every alpha-divergence fit reduces to."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.sum(_mixed_power(p, q, alpha)))


def alpha_divergence_weights(
    p: ArrayLike,
    q: ArrayLike,
    alpha: float,
    limit_tolerance: float = DEFAULT_LIMIT_TOLERANCE,
) -> float:
    """Discrete alpha-divergence between two aligned weight vectors."""
    total = float(np.sum(alpha_divergence_terms(p, q, alpha, limit_tolerance)))
    if math.isinf(total):
        logger.debug(f"alpha-divergence is unbounded at alpha={alpha}")
    return total


def _check_support(p: PositiveMeasure, q: PositiveMeasure) -> None:
    if p.atom_ids != q.atom_ids:
        raise SupportMismatchError(
            f"measures are defined over different atoms ({len(p.weights)} vs "
            f"{len(q.weights)} atoms, ids differ)"
        )


def alpha_divergence_discrete(p: PositiveMeasure, q: PositiveMeasure, a: AlphaLike) -> float:
    """Alpha-divergence between two positive measures over the same atoms.

    Args:
        p: First measure
        q: Second measure, aligned with ``p``
        a: Order alpha (and limit tolerance)

    Returns:
        The nonnegative divergence, or ``math.inf`` when it is unbounded

    Raises:
        SupportMismatchError: If the atom ids differ
    """
    a = as_alpha(a)
    _check_support(p, q)
    return alpha_divergence_weights(p.array, q.array, a.alpha, a.limit_tolerance)


def _trapezoid_nd(values: np.ndarray, nodes: list) -> float:
    integral = values
    for axis_nodes in reversed(nodes):
        integral = trapezoid(integral, axis_nodes, axis=-1)
    return float(integral)


def alpha_divergence_quadrature(
    p_density: Callable[[np.ndarray], np.ndarray],
    q_density: Callable[[np.ndarray], np.ndarray],
    grid: QuadratureGrid,
    a: AlphaLike,
) -> QuadratureResult:
    """Trapezoid-rule alpha-divergence between two densities.

    Densities are vectorized: on a 1-D grid they receive the node array of
    shape (N,), on a tensor-product grid an array of points of shape (N, d).
    A grid that misses tail mass is reported through ``normalization_ok``
    rather than raised.
    """
    a = as_alpha(a)
    nodes = [axis.nodes() for axis in grid.axes]
    if grid.dim == 1:
        pv = np.asarray(p_density(nodes[0]), dtype=float)
        qv = np.asarray(q_density(nodes[0]), dtype=float)
    else:
        mesh = np.meshgrid(*nodes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        pv = np.asarray(p_density(points), dtype=float).reshape(mesh[0].shape)
        qv = np.asarray(q_density(points), dtype=float).reshape(mesh[0].shape)

    if np.any(pv < 0) or np.any(qv < 0):
        raise DomainError("densities must be nonnegative on the quadrature grid")

    p_mass = _trapezoid_nd(pv, nodes)
    q_mass = _trapezoid_nd(qv, nodes)
    normalization_ok = (
        abs(p_mass - 1.0) <= NORMALIZATION_TOLERANCE
        and abs(q_mass - 1.0) <= NORMALIZATION_TOLERANCE
    )
    if not normalization_ok:
        logger.warning(
            f"Quadrature grid misses mass: int p = {p_mass:.9f}, int q = {q_mass:.9f}"
        )

    terms = alpha_divergence_terms(pv, qv, a.alpha, a.limit_tolerance)
    value = math.inf if np.any(np.isinf(terms)) else _trapezoid_nd(terms, nodes)
    return QuadratureResult(
        value=value, p_mass=p_mass, q_mass=q_mass, normalization_ok=normalization_ok
    )


def optimal_gamma_weights(
    p: ArrayLike,
    s: ArrayLike,
    alpha: float,
    limit_tolerance: float = DEFAULT_LIMIT_TOLERANCE,
) -> float:
    """Auto-normalizer (sum p^a s^(1-a) / sum s)^(1/a) on raw weight vectors."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    s_mass = float(np.sum(s))
    if not s_mass > 0:
        raise DomainError("the similarity measure has no mass")
    if abs(alpha) <= limit_tolerance:
        raise UnsupportedLimitError(
            f"the auto-normalizer is undefined at alpha={alpha} (exponent 1/alpha); "
            "use reverse_kl_gamma for the alpha -> 0 limit"
        )
    if abs(1.0 - alpha) <= limit_tolerance:
        return float(np.sum(p)) / s_mass

    h = hellinger_integral(p, s, alpha)
    if not 0.0 < h < math.inf:
        raise DomainError(f"Hellinger integral is {h!r}; p and s do not overlap usefully")
    gamma = math.exp((math.log(h) - math.log(s_mass)) / alpha)
    if not 0.0 < gamma < math.inf:
        raise DomainError(f"auto-normalizer out of range: {gamma!r}")
    return gamma


def optimal_gamma(p: PositiveMeasure, s: PositiveMeasure, a: AlphaLike) -> float:
    """The gamma > 0 minimizing D_alpha(p : gamma * s).

    Raises:
        UnsupportedLimitError: If alpha is within tolerance of 0
    """
    a = as_alpha(a)
    _check_support(p, s)
    return optimal_gamma_weights(p.array, s.array, a.alpha, a.limit_tolerance)


def reverse_kl_gamma(p: ArrayLike, s: ArrayLike) -> float:
    """Minimizer of KL(gamma * s : p): exp(sum s log(p/s) / sum s).

    This is the alpha -> 0 limit of the auto-normalizer.
    """
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    charged = s > 0
    s_mass = float(np.sum(s[charged]))
    if not s_mass > 0:
        raise DomainError("the similarity measure has no mass")
    if np.any(p[charged] == 0):
        raise DomainError("p vanishes where s is positive; reverse KL is unbounded")
    log_gamma = float(np.sum(s[charged] * np.log(p[charged] / s[charged]))) / s_mass
    return math.exp(log_gamma)


def reduced_divergence_weights(
    p: ArrayLike,
    s: ArrayLike,
    alpha: float,
    limit_tolerance: float = DEFAULT_LIMIT_TOLERANCE,
) -> float:
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    s_mass = float(np.sum(s))
    if not s_mass > 0:
        raise DomainError("the similarity measure has no mass")
    if abs(alpha) <= limit_tolerance:
        raise UnsupportedLimitError(
            f"the normalized form is undefined at alpha={alpha}; see reverse_kl_gamma"
        )
    q = s / s_mass
    p_mass = float(np.sum(p))

    if abs(1.0 - alpha) <= limit_tolerance:
        if np.any((p > 0) & (q == 0)):
            return math.inf
        charged = p > 0
        kl = float(np.sum(p[charged] * np.log(p[charged] / q[charged])))
        return kl - p_mass * math.log(p_mass)

    h = hellinger_integral(p, q, alpha)
    if math.isinf(h):
        return math.inf
    return (p_mass - h ** (1.0 / alpha)) / (1.0 - alpha)


def reduced_divergence_after_normalization(
    p: PositiveMeasure, s: PositiveMeasure, a: AlphaLike
) -> float:
    """Divergence left after the optimal gamma: 1/(1-a) [1 - (sum p^a q^(1-a))^(1/a)].

    ``q = s / sum(s)``. For unnormalized p the leading 1 becomes ``sum(p)``,
    which keeps the identity with ``alpha_divergence_discrete(p, gamma* s)``.
    """
    a = as_alpha(a)
    _check_support(p, s)
    return reduced_divergence_weights(p.array, s.array, a.alpha, a.limit_tolerance)


def divergence_from_reduced(
    reduced: float, alpha: float, limit_tolerance: float = DEFAULT_LIMIT_TOLERANCE
) -> float:
    """Map min_gamma D_alpha(p : gamma s) to D_alpha(p : q) for a normalized p.

    Both are monotone functions of the Hellinger integral B:
    reduced = (1 - B^(1/a)) / (1 - a) and D_a(p : q) = (1 - B) / (a (1 - a)).
    """
    if math.isinf(reduced):
        return math.inf
    if abs(1.0 - alpha) <= limit_tolerance:
        return reduced
    base = 1.0 - (1.0 - alpha) * reduced
    if not base > 0:
        raise DomainError(f"reduced divergence {reduced!r} is out of range for alpha={alpha}")
    if abs(alpha) <= limit_tolerance:
        return -math.log(base)
    log_b = alpha * math.log(base)
    return -math.expm1(log_b) / (alpha * (1.0 - alpha))


def _cholesky(matrix: np.ndarray, name: str) -> tuple:
    try:
        return linalg.cho_factor(matrix, lower=True)
    except linalg.LinAlgError as e:
        raise DomainError(f"{name} is not positive definite") from e


def logdet_divergence(A: np.ndarray, B: np.ndarray) -> float:
    """LogDet matrix divergence tr(A B^-1) - log|A B^-1| - d.

    The -d shift makes LogDet(A, A) = 0.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise DomainError(f"need two square matrices of equal size, got {A.shape} and {B.shape}")
    for name, M in (("A", A), ("B", B)):
        if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
            raise DomainError(f"{name} is not symmetric")
    d = A.shape[0]
    chol_a = _cholesky(A, "A")
    chol_b = _cholesky(B, "B")
    trace = float(np.trace(linalg.cho_solve(chol_b, A)))
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(chol_a[0]))))
    logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b[0]))))
    return trace - (logdet_a - logdet_b) - d
