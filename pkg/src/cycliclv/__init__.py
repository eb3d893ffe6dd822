"""Estimation of cyclist action models with latent arousal and fatigue.

The package covers the full pipeline: imputing actions from GPS speed
traces, describing ride video through a language-model API and turning
the descriptions into covariates, and estimating integrated choice and
latent variable models by maximum simulated likelihood.
"""

__version__ = "0.1.0"

from .estimator import (
    EstimationConfig,
    EstimationError,
    EstimationResult,
    estimate,
    fit_metrics,
    null_loglik,
    report,
    results_text,
    robust_covariance,
    stars,
)
from .draws import SimulationDraws, make_draws
from .imputer import ImputerConfig, impute
from .likelihood import (
    LikelihoodError,
    LikelihoodReport,
    loglik_gradient,
    obs_sim_likelihood,
    total_loglik,
)
from .modelspec import (
    ACTIONS,
    ModelSpec,
    SpecError,
    free_dimension,
    load_bundled_spec,
    load_spec_file,
    parse_spec,
    serialize_spec,
)
from .panel import (
    DeriveConfig,
    PanelDataset,
    PanelError,
    derive_levels,
    exclude_forced_stops,
    load_panel,
    standardize_indicators,
)
from .params import Parameter, ParameterError, ParameterVector
from .synthetic import (
    CovariateSpec,
    GeneratorConfig,
    recovery_experiment,
    simulate_dataset,
)
