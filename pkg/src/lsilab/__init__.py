"""Numerical laboratory for Gaussian log-Sobolev deficit stability.

Gaussian-mixture calculus, entropy/Fisher functionals with error bars,
inequality verification batteries, closed-form bridge-process simulation,
Wasserstein estimation, constructive decompositions, and the classical
two-Gaussian instability families.
"""

from .bounds import (
    BoundReport,
    SpectralData,
    check_bgrs_bounds,
    check_cov_bound,
    check_cramer_rao,
    check_dimensional_lsi,
    check_eigen_deficit_bounds,
    check_logdet_bound,
    check_lsi,
    convexity_deficit_bound,
    delta_fn,
    mixture_deficit_upper,
    optimal_scaling,
    shannon_bound,
    standard_battery,
    wasserstein_lower_two_point,
)
from .counterex import (
    FamilyMember,
    isotropic_family,
    question1_probe,
    sweep,
    variance_blowup_family,
)
from .decompose import spectral_clip, theorem_dim, theorem_uncor
from .errors import LsiLabError
from .follmer import (
    BridgeState,
    PathEnsemble,
    bridge_state,
    drift_quadrature_oracle,
    energy_identities,
    localization_checks,
    martingale_diagnostics,
    simulate_ensemble,
)
from .functionals import (
    Budget,
    Estimate,
    MatrixEstimate,
    deficit,
    entropy_rel_gaussian,
    fisher_matrix,
    gaussian_closed_forms,
    integration_by_parts_check,
)
from .gaussmix import (
    GaussianMixture,
    LocalDensityData,
    evaluate,
    gaussian,
    gaussian_1d,
    mixture_new,
    moments,
    product_measure,
    sample,
    standard_gaussian,
)
from .rng import DEFAULT_SEED
from .transport import (
    EmpiricalMeasure,
    infimum_over_translates,
    w2_gaussian_closed,
    w2_sliced,
    wp_1d_exact,
    wp_assignment,
)

__version__ = "0.1.0"
