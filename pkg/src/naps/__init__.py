"""Nuisance-aware prediction sets for binary classification under
generalized label shift: distribution shift in (label, nuisance) while the
observation model p(x | y, nu) is shared between train and target."""

from .classifier import (
    AnalyticMarginalClassifier,
    HistogramClassifier,
    bayes_factor,
    bayes_factor_from_posterior,
    fit_histogram_classifier,
)
from .cutoffs import (
    CutoffRequest,
    CutoffResult,
    analytic_oracle_cutoffs,
    data_dependent_cutoff,
    fixed_nu_cutoff,
    uniform_cutoff,
)
from .errors import (
    BinningError,
    ConfigError,
    DomainError,
    NapsError,
    NumericError,
    SaturationError,
)
from .genmodel import (
    Dataset,
    GenerativeConfig,
    NuisanceSpace,
    PriorSpec,
    analytic_config,
    sample_dataset,
    sample_discrete_toy,
    truncated_gaussian_prior,
    uniform_prior,
)
from .harness import ExperimentConfig, MetricsReport, gamma_sweep, invariance_check, run_experiment
from .nuisance import (
    FullSpaceProvider,
    NuisanceRegion,
    OracleQuantileProvider,
    full_space_set,
    oracle_quantile_set,
)
from .prediction_sets import (
    NapsSetClassifier,
    PredictionSet,
    bayes_point_predict,
    class_conditional_set_predict,
    naps_predict,
    plug_in_conditional_predict,
    standard_set_predict,
)
from .rejection import (
    AugmentedRecords,
    CutoffGrid,
    NuBinning,
    RejectionSurface,
    augment,
    fit_rejection_surface,
    fit_surface,
    pit_diagnostics,
    pool_adjacent_violators,
    sample_cutoff_grid,
)

__version__ = "0.1.0"
