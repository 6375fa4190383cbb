"""Mean-field variational inference toolkit.

Coordinate ascent (CAVI) and stochastic (SVI) fits over an
exponential-family core, with built-in Bayesian Gaussian mixtures, linear
regression with per-coefficient relevance priors, and a topic model.
"""

from .engine import (
    FitConfig,
    FitReport,
    InitStrategy,
    MeanFieldState,
    VariationalModel,
    cavi_fit,
    compute_elbo,
    heldout_log_predictive,
    init_state,
    meanfield_gaussian_fixed_point,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DomainError,
    MonotonicityError,
    NumericError,
)
from .expfam import ExpFamParam, Family
from .condconj import CondConjSpec, StepSchedule, svi_fit

__version__ = "0.1.0"

__all__ = [
    "FitConfig",
    "FitReport",
    "InitStrategy",
    "MeanFieldState",
    "VariationalModel",
    "cavi_fit",
    "compute_elbo",
    "heldout_log_predictive",
    "init_state",
    "meanfield_gaussian_fixed_point",
    "ConfigError",
    "DataFormatError",
    "DomainError",
    "MonotonicityError",
    "NumericError",
    "ExpFamParam",
    "Family",
    "CondConjSpec",
    "StepSchedule",
    "svi_fit",
    "__version__",
]
