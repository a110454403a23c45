import math

import numpy as np
import pytest
from scipy import linalg

from alpha_discrepancy.exceptions import (
    DomainError,
    SupportMismatchError,
    UnsupportedLimitError,
)
from alpha_discrepancy.geometry import gaussian_log_density
from alpha_discrepancy.measures import (
    alpha_divergence_discrete,
    alpha_divergence_quadrature,
    alpha_divergence_terms,
    divergence_from_reduced,
    hellinger_integral,
    logdet_divergence,
    optimal_gamma,
    reduced_divergence_after_normalization,
    reverse_kl_gamma,
)
from alpha_discrepancy.models import AlphaParam, PositiveMeasure, QuadratureAxis, QuadratureGrid


def measure(*weights):
    return PositiveMeasure(weights=list(weights))


def gaussian_1d(precision):
    def density(x):
        return np.exp(gaussian_log_density([0.0], [[precision]], np.asarray(x).reshape(-1, 1)))

    return density


def test_identical_measures_have_zero_divergence():
    """p = q gives 0 at every order, limits included."""
    p = measure(0.5, 0.5)
    for alpha in (0.0, 0.5, 1.0, 2.0):
        assert alpha_divergence_discrete(p, p, alpha) == pytest.approx(0.0, abs=1e-15)


def test_kl_limit_examples():
    """Hand-evaluated KL values."""
    assert alpha_divergence_discrete(measure(1, 0), measure(0.5, 0.5), 1.0) == pytest.approx(
        math.log(2.0), abs=1e-12
    )
    assert alpha_divergence_discrete(
        measure(0.75, 0.25), measure(0.5, 0.5), 1.0
    ) == pytest.approx(0.130812, abs=1e-6)


def test_kl_limit_matches_nearby_orders():
    """The limit formula is what the general formula tends to."""
    p, q = measure(1, 0), measure(0.5, 0.5)
    kl = alpha_divergence_discrete(p, q, 1.0)
    for alpha in (1.0 - 1e-5, 1.0 + 1e-5):
        assert alpha_divergence_discrete(p, q, alpha) == pytest.approx(kl, abs=1e-4)


def test_limit_continuity_on_random_measures():
    """Both limits are continuous on strictly positive measures."""
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = PositiveMeasure.from_array(rng.uniform(0.1, 1.0, 6))
        q = PositiveMeasure.from_array(rng.uniform(0.1, 1.0, 6))
        kl = alpha_divergence_discrete(p, q, 1.0)
        reverse = alpha_divergence_discrete(p, q, 0.0)
        for eps in (1e-5, -1e-5):
            assert abs(alpha_divergence_discrete(p, q, 1.0 + eps) - kl) <= 1e-4 * (1 + kl)
            assert abs(alpha_divergence_discrete(p, q, eps) - reverse) <= 1e-4 * (1 + reverse)


def test_nonnegativity_over_alpha_grid():
    """Random positive measures give a nonnegative divergence for alpha in [-2, 3]."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = PositiveMeasure.from_array(rng.uniform(0.01, 2.0, 5))
        q = PositiveMeasure.from_array(rng.uniform(0.01, 2.0, 5))
        for alpha in np.linspace(-2.0, 3.0, 51):
            assert alpha_divergence_discrete(p, q, float(alpha)) >= -1e-12


def test_identity_of_indiscernibles():
    """Zero for equal measures, strictly positive otherwise."""
    rng = np.random.default_rng(5)
    for _ in range(10):
        w = rng.uniform(0.1, 1.0, 4)
        p = PositiveMeasure.from_array(w)
        q = PositiveMeasure.from_array(w * rng.uniform(0.5, 1.5, 4))
        for alpha in (0.0, 0.3, 1.0):
            assert alpha_divergence_discrete(p, p, alpha) == pytest.approx(0.0, abs=1e-12)
            assert alpha_divergence_discrete(p, q, alpha) > 0


def test_unbounded_divergence_is_infinite():
    """Mass where the other measure has none gives inf, not an error."""
    assert alpha_divergence_discrete(measure(1, 1), measure(1, 0), 1.0) == math.inf
    assert alpha_divergence_discrete(measure(1, 0), measure(1, 1), 0.0) == math.inf
    assert math.isfinite(alpha_divergence_discrete(measure(1, 1), measure(1, 0), 0.5))


def test_zero_log_zero_convention():
    """Atoms empty in both measures contribute nothing."""
    terms = alpha_divergence_terms([0.0, 0.5], [0.0, 0.5], 1.0)
    assert terms.tolist() == [0.0, 0.0]


def test_invalid_measures():
    """Negative weights and empty mass are domain errors."""
    with pytest.raises(DomainError, match="negative"):
        measure(0.5, -0.1)
    with pytest.raises(DomainError, match="at least one weight must be positive"):
        measure(0.0, 0.0)
    with pytest.raises(DomainError, match="finite"):
        measure(1.0, math.nan)


def test_support_mismatch():
    """Measures over different atoms cannot be compared."""
    p = PositiveMeasure(weights=[0.5, 0.5], atom_ids=[0, 1])
    q = PositiveMeasure(weights=[0.5, 0.5], atom_ids=[0, 2])
    with pytest.raises(SupportMismatchError):
        alpha_divergence_discrete(p, q, 0.5)
    with pytest.raises(SupportMismatchError):
        PositiveMeasure(weights=[1.0, 1.0], atom_ids=[0])


def test_limit_tolerance_range():
    """The switch-to-limit threshold must lie in (0, 0.01)."""
    with pytest.raises(DomainError, match="limit_tolerance"):
        AlphaParam(alpha=0.5, limit_tolerance=0.1)
    assert AlphaParam(alpha=1.0 + 1e-4, limit_tolerance=1e-3).at_kl_limit


def test_quadrature_identical_densities():
    """Identical standard normals have zero divergence."""
    grid = QuadratureGrid.line(-8.0, 8.0, 4001)
    result = alpha_divergence_quadrature(gaussian_1d(1.0), gaussian_1d(1.0), grid, 0.5)
    assert result.value == pytest.approx(0.0, abs=1e-8)
    assert result.normalization_ok


def test_quadrature_gaussian_anchors():
    """N(0, 1/2) against N(0, 1)."""
    grid = QuadratureGrid.line(-12.0, 12.0, 8001)
    p, q = gaussian_1d(2.0), gaussian_1d(1.0)
    assert alpha_divergence_quadrature(p, q, grid, 1.0).value == pytest.approx(0.096574, abs=1e-6)
    assert alpha_divergence_quadrature(p, q, grid, 0.5).value == pytest.approx(
        4.0 * (1.0 - 2.0**0.25 / math.sqrt(1.5)), abs=1e-9
    )
    assert alpha_divergence_quadrature(p, q, grid, 0.0).value == pytest.approx(0.153426, abs=1e-6)


def test_quadrature_flags_missing_mass():
    """A grid that misses tail mass is reported, not raised."""
    grid = QuadratureGrid.line(-1.0, 1.0, 201)
    result = alpha_divergence_quadrature(gaussian_1d(1.0), gaussian_1d(1.0), grid, 0.5)
    assert not result.normalization_ok
    assert result.p_mass < 0.7


def test_quadrature_tensor_grid():
    """On a 2-D grid the KL of independent coordinates adds up."""
    axis = QuadratureAxis(lower=-8.0, upper=8.0, points=401)
    grid = QuadratureGrid(axes=[axis, axis])

    def p(points):
        return np.exp(gaussian_log_density(np.zeros(2), 2.0 * np.eye(2), points))

    def q(points):
        return np.exp(gaussian_log_density(np.zeros(2), np.eye(2), points))

    result = alpha_divergence_quadrature(p, q, grid, 1.0)
    assert result.normalization_ok
    assert result.value == pytest.approx(2 * 0.0965736, abs=1e-6)


def test_quadrature_invariant_under_change_of_variable():
    """x = u + u^3/3 applied to both densities leaves the divergence unchanged."""
    p, q = gaussian_1d(2.0), gaussian_1d(1.0)

    def pulled(density):
        return lambda u: density(u + u**3 / 3.0) * (1.0 + u**2)

    x_grid = QuadratureGrid.line(-12.0, 12.0, 8001)
    u_grid = QuadratureGrid.line(-4.0, 4.0, 16001)
    for alpha in (0.0, 0.5, 1.0):
        direct = alpha_divergence_quadrature(p, q, x_grid, alpha).value
        transformed = alpha_divergence_quadrature(pulled(p), pulled(q), u_grid, alpha).value
        assert transformed == pytest.approx(direct, abs=1e-6)


def test_quadrature_rejects_negative_density():
    """Densities must be nonnegative on the grid."""
    grid = QuadratureGrid.line(-1.0, 1.0, 11)
    with pytest.raises(DomainError, match="nonnegative"):
        alpha_divergence_quadrature(lambda x: x, lambda x: np.ones_like(x), grid, 0.5)


def test_optimal_gamma_examples():
    """Closed-form values of the auto-normalizer."""
    assert optimal_gamma(measure(0.6, 0.4), measure(1, 1), 1.0) == pytest.approx(0.5)
    p = measure(0.3, 0.7)
    for alpha in (0.25, 0.5, 1.0, 1.5):
        assert optimal_gamma(p, p, alpha) == pytest.approx(1.0, abs=1e-12)


def test_optimal_gamma_undefined_at_zero():
    """The auto-normalizer has no alpha -> 0 form."""
    with pytest.raises(UnsupportedLimitError, match="reverse_kl_gamma"):
        optimal_gamma(measure(0.5, 0.5), measure(1, 1), 0.0)
    with pytest.raises(UnsupportedLimitError):
        reduced_divergence_after_normalization(measure(0.5, 0.5), measure(1, 1), 1e-8)


def _grid_scan(p, s, alpha, gammas):
    terms = alpha_divergence_terms(p.array[None, :], gammas[:, None] * s.array[None, :], alpha)
    return terms.sum(axis=1)


def test_optimal_gamma_beats_grid_scan():
    """The auto-normalizer is no worse than any of 1e4 log-spaced candidates."""
    gammas = np.logspace(-3, 3, 10_000)
    p, s = measure(0.75, 0.25), measure(2, 2)
    scaled = PositiveMeasure.from_array(optimal_gamma(p, s, 0.5) * s.array)
    best = alpha_divergence_discrete(p, scaled, 0.5)
    assert best <= _grid_scan(p, s, 0.5, gammas).min() + 1e-12

    rng = np.random.default_rng(2024)
    for _ in range(50):
        size = int(rng.integers(2, 8))
        p = PositiveMeasure.from_array(rng.uniform(0.05, 1.0, size))
        s = PositiveMeasure.from_array(rng.uniform(0.05, 1.0, size))
        alpha = float(rng.choice([0.25, 0.5, 0.75, 1.0, 1.5]))
        gamma = optimal_gamma(p, s, alpha)
        best = alpha_divergence_discrete(p, PositiveMeasure.from_array(gamma * s.array), alpha)
        assert best <= _grid_scan(p, s, alpha, gammas).min() + 1e-12


def test_reduced_form_identity():
    """The reduced divergence equals the divergence at the optimal gamma."""
    assert reduced_divergence_after_normalization(
        measure(0.75, 0.25), measure(1, 1), 1.0
    ) == pytest.approx(0.130812, abs=1e-6)
    p = measure(0.4, 0.6)
    assert reduced_divergence_after_normalization(p, p, 0.5) == pytest.approx(0.0, abs=1e-12)

    rng = np.random.default_rng(8)
    for alpha in (0.25, 0.5, 0.75, 1.0, 1.5):
        for _ in range(10):
            p = PositiveMeasure.from_array(rng.uniform(0.05, 1.0, 5))
            s = PositiveMeasure.from_array(rng.uniform(0.05, 3.0, 5))
            gamma = optimal_gamma(p, s, alpha)
            scaled = PositiveMeasure.from_array(gamma * s.array)
            direct = alpha_divergence_discrete(p, scaled, alpha)
            assert reduced_divergence_after_normalization(p, s, alpha) == pytest.approx(
                direct, abs=1e-10
            )


def test_reduced_form_example_at_half():
    """p = (0.75, 0.25), s = (3, 1): both paths agree."""
    p, s = measure(0.75, 0.25), measure(3, 1)
    gamma = optimal_gamma(p, s, 0.5)
    direct = alpha_divergence_discrete(p, PositiveMeasure.from_array(gamma * s.array), 0.5)
    assert reduced_divergence_after_normalization(p, s, 0.5) == pytest.approx(direct, abs=1e-12)
    assert reduced_divergence_after_normalization(p, s, 0.5) == pytest.approx(0.0, abs=1e-12)


def test_divergence_from_reduced_recovers_normalized_divergence():
    """Mapping the reduced value back gives D(p : s / sum(s)) for normalized p."""
    rng = np.random.default_rng(17)
    for alpha in (0.3, 0.5, 1.0, 1.5):
        w = rng.uniform(0.1, 1.0, 6)
        p = PositiveMeasure.from_array(w / w.sum())
        s = PositiveMeasure.from_array(rng.uniform(0.1, 4.0, 6))
        q = PositiveMeasure.from_array(s.array / s.array.sum())
        reduced = reduced_divergence_after_normalization(p, s, alpha)
        assert divergence_from_reduced(reduced, alpha) == pytest.approx(
            alpha_divergence_discrete(p, q, alpha), abs=1e-10
        )


def test_hellinger_integral_of_probability_vectors():
    """For normalized p and q the divergence is (1 - H) / (a(1 - a))."""
    p = np.array([0.2, 0.5, 0.3])
    q = np.array([0.4, 0.4, 0.2])
    assert hellinger_integral(p, p, 0.5) == pytest.approx(1.0)
    for alpha in (0.25, 0.5, 2.0):
        expected = (1.0 - hellinger_integral(p, q, alpha)) / (alpha * (1.0 - alpha))
        assert alpha_divergence_discrete(
            PositiveMeasure.from_array(p), PositiveMeasure.from_array(q), alpha
        ) == pytest.approx(expected, abs=1e-12)

def test_reverse_kl_gamma_is_stationary():
    """Scaling the reverse-KL normalizer by 10% either way never helps."""
    rng = np.random.default_rng(23)
    p = rng.uniform(0.1, 1.0, 7)
    s = rng.uniform(0.1, 2.0, 7)
    gamma = reverse_kl_gamma(p, s)

    def cost(g):
        return float(np.sum(alpha_divergence_terms(p, g * s, 0.0)))

    assert cost(gamma) <= cost(0.9 * gamma)
    assert cost(gamma) <= cost(1.1 * gamma)
    with pytest.raises(DomainError, match="reverse KL is unbounded"):
        reverse_kl_gamma([0.0, 1.0], [1.0, 1.0])


def test_logdet_examples():
    """Hand-evaluated LogDet values."""
    assert logdet_divergence(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-12)
    assert logdet_divergence(np.array([[2.0]]), np.array([[1.0]])) == pytest.approx(
        2.0 - math.log(2.0) - 1.0, abs=1e-12
    )


def test_logdet_matches_generalized_eigenvalues():
    """sum(l - log l - 1) over the eigenvalues of B^-1 A."""
    rng = np.random.default_rng(4)
    G = rng.standard_normal((4, 4))
    H = rng.standard_normal((4, 4))
    A = G @ G.T + 0.5 * np.eye(4)
    B = H @ H.T + 0.5 * np.eye(4)
    eig = linalg.eigh(A, B, eigvals_only=True)
    expected = float(np.sum(eig - np.log(eig) - 1.0))
    assert logdet_divergence(A, B) == pytest.approx(expected, abs=1e-10)


def test_logdet_rejects_bad_input():
    """Indefinite, asymmetric or mismatched matrices are domain errors."""
    with pytest.raises(DomainError, match="not positive definite"):
        logdet_divergence(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(DomainError, match="not symmetric"):
        logdet_divergence(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(DomainError, match="equal size"):
        logdet_divergence(np.eye(2), np.eye(3))
