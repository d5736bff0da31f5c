"""Projection-based linear regression at desk scale.

Population models and Gaussian sampling (:mod:`projreg.data_model`), the
full family of projection estimators (:mod:`projreg.estimators`), exact
and Monte Carlo risk (:mod:`projreg.risk`), computable non-asymptotic
bounds (:mod:`projreg.bounds`), single-point data-poisoning attacks
(:mod:`projreg.attack`), and a reproducible experiment harness with a CLI
(:mod:`projreg.harness`, ``projreg run ...``).
"""

from .data_model import (
    BetaSpec,
    CovarianceSpec,
    DataModel,
    Dataset,
    build_beta,
    build_covariance,
    build_model,
    sample,
    truncate_model,
)
from .estimators import (
    FitResult,
    GenerativeOptions,
    ProjectionMatrix,
    fit_generative,
    fit_ols,
    fit_oracle_pcr,
    fit_pca_ols,
    fit_pls,
    fit_random_projection,
    fit_ridge,
    null_and_truth_baselines,
    select_ridge_loocv,
)
from .risk import RiskReport, exact_conditional_risk, monte_carlo_mse

__all__ = [
    "BetaSpec",
    "CovarianceSpec",
    "DataModel",
    "Dataset",
    "FitResult",
    "GenerativeOptions",
    "ProjectionMatrix",
    "RiskReport",
    "build_beta",
    "build_covariance",
    "build_model",
    "exact_conditional_risk",
    "fit_generative",
    "fit_ols",
    "fit_oracle_pcr",
    "fit_pca_ols",
    "fit_pls",
    "fit_random_projection",
    "fit_ridge",
    "monte_carlo_mse",
    "null_and_truth_baselines",
    "sample",
    "select_ridge_loocv",
    "truncate_model",
]

__version__ = "0.1.0"
