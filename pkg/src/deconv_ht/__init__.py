"""Deconvolution of response probabilities and modified Horvitz-Thompson estimation."""
from .deconvolve import (
    CalibrationConstraint,
    FitConfig,
    GroupData,
    Method,
    fit,
    fit_joint,
    fit_mle,
    fit_moments,
)
from .estimators import (
    PopulationFrame,
    bootstrap_mse_term,
    ht_oracle_total,
    mht_proportions,
    mht_total,
    naive_proportions,
)
from .kernels import (
    Grid,
    KernelMatrix,
    ShiftedBinomial,
    TruncatedGeometric,
    build_kernel_matrix,
    default_grid,
    response_prob,
    shifted_binomial_pmf,
    truncated_geometric_pmf,
)
from .mixture import (
    CountVector,
    CovarianceModel,
    DiscreteMixture,
    counts_to_freq,
    covariance_star,
    expected_functional,
    expected_inverse,
    mixture_pmf,
)
from .qp import QpProblem, QpSolution, Status, simplex_ls, solve

__all__ = [
    "CalibrationConstraint",
    "CountVector",
    "CovarianceModel",
    "DiscreteMixture",
    "FitConfig",
    "Grid",
    "GroupData",
    "KernelMatrix",
    "Method",
    "PopulationFrame",
    "QpProblem",
    "QpSolution",
    "ShiftedBinomial",
    "Status",
    "TruncatedGeometric",
    "bootstrap_mse_term",
    "build_kernel_matrix",
    "counts_to_freq",
    "covariance_star",
    "default_grid",
    "expected_functional",
    "expected_inverse",
    "fit",
    "fit_joint",
    "fit_mle",
    "fit_moments",
    "ht_oracle_total",
    "mht_proportions",
    "mht_total",
    "mixture_pmf",
    "naive_proportions",
    "response_prob",
    "shifted_binomial_pmf",
    "simplex_ls",
    "solve",
    "truncated_geometric_pmf",
]

__version__ = "0.1.0"
