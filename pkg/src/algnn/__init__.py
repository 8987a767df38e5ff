"""Algebraic signal models, filters, perturbations, and stability checks."""

from .signal_models import (
    ModelError,
    ShiftFamily,
    SpectralError,
    abelian_group_shifts,
    cyclic_shift,
    graph_shift,
    graphon_shift,
    grid2d_shifts,
    load_edge_list,
)
from .polynomials import (
    LipschitzEstimate,
    PolynomialFilter,
    estimate_lipschitz,
    eval_operator,
    eval_scalar,
    scalar_gradient,
)
from .spectral import SpectralDecomposition, decompose, fourier, inverse_fourier, spectral_apply
from .perturbation import (
    CommutationAnalysis,
    PerturbationModel,
    commutation_analysis,
    delta_upper_bound,
    perturb,
    random_perturbation,
)
from .frechet import (
    FdOracleResult,
    FrechetNormResult,
    frechet_apply,
    frechet_fd_oracle,
    frechet_norm,
    partial_realized,
)

__all__ = [
    "ModelError",
    "SpectralError",
    "ShiftFamily",
    "cyclic_shift",
    "graph_shift",
    "graphon_shift",
    "abelian_group_shifts",
    "grid2d_shifts",
    "load_edge_list",
    "PolynomialFilter",
    "LipschitzEstimate",
    "eval_scalar",
    "eval_operator",
    "scalar_gradient",
    "estimate_lipschitz",
    "SpectralDecomposition",
    "decompose",
    "fourier",
    "inverse_fourier",
    "spectral_apply",
    "PerturbationModel",
    "CommutationAnalysis",
    "perturb",
    "random_perturbation",
    "commutation_analysis",
    "delta_upper_bound",
    "frechet_apply",
    "partial_realized",
    "frechet_fd_oracle",
    "frechet_norm",
    "FdOracleResult",
    "FrechetNormResult",
]

__version__ = "0.1.0"
