"""Efficient estimation and inference for unlabeled target populations
under label shift.

Labeled source data and unlabeled target data share the conditional law of
the covariates given the outcome; only the outcome marginals differ.  The
package estimates the outcome density ratio between the populations in
stages (working model, consistent estimate, variance-reducing refinement)
and solves rectified estimating equations that attain the semiparametric
efficiency bound for general target-population parameters.
"""

from ._engine import EifEngine, SolverConfig
from .baselines import (
    WorkingRegressionModel,
    doubly_flexible,
    oracle_efficient,
    ppi_mean,
    ppi_report,
    shift_dependent,
    shift_dependent_report,
    singly_flexible,
)
from .condexp import (
    ClassProbCondExp,
    CondExpModel,
    NadarayaWatsonCondExp,
    NormalWorkingCondExp,
    fit_cond_exp_nonparametric,
)
from .config import RunConfig, config_from_dict, load_config
from .data import PooledDataset, make_dataset
from .dataio import LoadedData, load_dataset, save_dataset
from .density_ratio import (
    consistent_ratio,
    estimate_target_density,
    ratio_curves,
    refined_ratio,
)
from .discrete import (
    confusion_matrix_ratio,
    discrete_class_prob,
    discrete_class_probs,
    discrete_ratio_estimate,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataValidationError,
    LabelShiftError,
    SingularSystemError,
    SupportError,
)
from .estimators import (
    EstimateReport,
    GeneralEstimand,
    MomentEstimand,
    compute_weights,
    efficient_estimate,
    estimate_with_ratio,
    mean_estimand,
    moment_estimand,
    moment_estimate,
    predict_b,
    variance_estimand,
)
from .fredholm import FredholmSystem, NuisanceFunction, assemble_system, solve
from .inference import (
    EifEvaluation,
    confidence_interval,
    influence_values,
    target_density_variance,
)
from .kernels import BandwidthPolicy, KernelSpec, kde, kernel_eval, nw_regress
from .ratios import DensityRatioModel, DiscreteRatio, RatioGridPlan, constant_ratio
from .simulation import (
    MetricsRow,
    SimConfig,
    StudyResult,
    generate_replicate,
    no_shift_config,
    run_study,
    working_rho_star,
)

__version__ = "0.1.0"
