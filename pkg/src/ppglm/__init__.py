"""Post-selection inference for GLM coefficients after Lasso selection.

The pipeline linearizes a fitted GLM into centered pseudo-data, selects a
model with the Lasso, enumerates the selection event exactly along the
contrast direction of each selected coefficient, and inverts the resulting
truncated-Gaussian pivot into p-values and confidence intervals. Naive Wald
and sign-conditioned (polyhedral) baselines, a Monte Carlo harness, and a
CSV-driven CLI are included.
"""

from .exceptions import (
    ConfigError,
    DataValidationError,
    EmptyModelError,
    NumericError,
    PpglmError,
)
from .glm_core import (
    Dataset,
    Family,
    FitOptions,
    GlmFit,
    LinearizedData,
    contrast,
    family_eval,
    fit_mle,
    linearize,
    pivot_statistic,
)
from .intervals import IntervalUnion, intersect
from .lasso import LassoSolution, refit_ls, select_model, solve_lasso
from .parametric_path import (
    PathSegment,
    TauParameterization,
    enumerate_path,
    lambda_selection_event,
    lasso_path_in_tau,
    model_event,
    parameterize,
    select_lambda,
    selection_event,
    sign_event,
)
from .truncnorm import TruncatedGaussian, cdf, confidence_interval, p_value
from .baselines import naive_wald, polyhedral_infer
from .pipeline import analyze_linearized, make_split, projected_targets, run_inference
from .report import CoefficientResult, InferenceReport
from .sim_harness import (
    Scenario,
    SummaryTable,
    generate_dataset,
    lambda_grid,
    reference_scenario,
    run_replications,
    type_i_error,
)

__version__ = "0.1.0"
