"""Longitudinal overdispersion index for grouped nominal polytomous data.

Fits mixed generalized-logits models with a per-group Gaussian random
intercept, computes the longitudinal dispersion index from observed and
model-expected variances, and runs the supporting simulation study.
"""

__version__ = "0.1.0"

from .data import GroupedLongitudinalDataset, ModelSpec, design_matrix, parameter_names
from .dispersion import DispersionReport, dispersion_index, expected_variance, observed_variance
from .estimator import MixedLogitRegressor
from .exceptions import (DatasetValidationError, DegenerateDataError, NestingError,
                         NotConvergedError, OptimizerFailureError, RankDeficiencyError)
from .model import (FitOptions, FitResult, fit, fitted_probabilities, linear_predictor, loglik,
                    penalized_gradient, penalized_loglik)
from .multinomial import (multinomial_logpmf, multinomial_moments, multinomial_pmf,
                          multinomial_sample, softmax_probs)
from .simulation import ScenarioConfig, StudySummary, default_grid, run_study, summarize
from .stats import LrTestResult, ShapiroResult, chisq_sf, lr_test, shapiro_wilk

__all__ = [
    "__version__",
    "GroupedLongitudinalDataset", "ModelSpec", "design_matrix", "parameter_names",
    "DispersionReport", "dispersion_index", "expected_variance", "observed_variance",
    "MixedLogitRegressor",
    "DatasetValidationError", "DegenerateDataError", "NestingError", "NotConvergedError",
    "OptimizerFailureError", "RankDeficiencyError",
    "FitOptions", "FitResult", "fit", "fitted_probabilities", "linear_predictor", "loglik",
    "penalized_gradient", "penalized_loglik",
    "multinomial_logpmf", "multinomial_moments", "multinomial_pmf", "multinomial_sample",
    "softmax_probs",
    "ScenarioConfig", "StudySummary", "default_grid", "run_study", "summarize",
    "LrTestResult", "ShapiroResult", "chisq_sf", "lr_test", "shapiro_wilk",
]
