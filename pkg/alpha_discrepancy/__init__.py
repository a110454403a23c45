"""alpha_discrepancy - how far a smooth map is from an isometry, measured with alpha-divergences."""

from .discrepancy import (
    alpha_discrepancy,
    conformal_alpha_discrepancy,
    empirical_alpha_discrepancy_Rp,
    empirical_alpha_discrepancy_Rq,
    pointwise_discrepancy_closed_form,
)
from .exceptions import AlphaDiscrepancyError
from .geometry import (
    LatentPrior,
    SimilarityKernel,
    SmoothMap,
    builtin_test_maps,
    finite_difference_jacobian,
    gaussian_neighborhood_density,
    pullback_metric,
)
from .measures import (
    alpha_divergence_discrete,
    alpha_divergence_quadrature,
    optimal_gamma,
    reduced_divergence_after_normalization,
)
from .models import AlphaParam, DiscrepancyEstimate, PositiveMeasure
from .neighbor_embedding import (
    calibrate_precisions,
    embedding_cost,
    embedding_cost_gradient,
    embedding_similarities,
    input_similarities,
    optimize_embedding,
    theorem6_experiment,
)

__version__ = "0.1.0"
__all__ = [
    "alpha_discrepancy",
    "conformal_alpha_discrepancy",
    "empirical_alpha_discrepancy_Rp",
    "empirical_alpha_discrepancy_Rq",
    "pointwise_discrepancy_closed_form",
    "AlphaDiscrepancyError",
    "LatentPrior",
    "SimilarityKernel",
    "SmoothMap",
    "builtin_test_maps",
    "finite_difference_jacobian",
    "gaussian_neighborhood_density",
    "pullback_metric",
    "alpha_divergence_discrete",
    "alpha_divergence_quadrature",
    "optimal_gamma",
    "reduced_divergence_after_normalization",
    "AlphaParam",
    "DiscrepancyEstimate",
    "PositiveMeasure",
    "calibrate_precisions",
    "embedding_cost",
    "embedding_cost_gradient",
    "embedding_similarities",
    "input_similarities",
    "optimize_embedding",
    "theorem6_experiment",
]
