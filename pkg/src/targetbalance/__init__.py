"""Transportable experiment design via importance-weighted rerandomization."""

from ._backend import backend
from .errors import (
    AcceptanceFailureError,
    DataFormatError,
    DegenerateOutcomeError,
    InsufficientSamplesError,
    ScenarioError,
    SingularCovarianceError,
    TargetBalanceError,
)
from .estimators import (
    EstimateRecord,
    ht_decomposition_check,
    observed_outcomes,
    unweighted_estimator,
    weighted_estimator,
)
from .populations import (
    GaussianPopulationPair,
    OutcomeModel,
    WeightPolicy,
    clip_weights,
    generate_outcomes,
    importance_weights,
    log_density_ratio,
    nested_trial_weight,
    read_covariates_csv,
    sample_covariates,
    standard_normals,
    true_target_ate,
    write_covariates_csv,
)
from .randomization import (
    AssignmentVector,
    BalanceSpec,
    BalanceStatistic,
    QuantileRule,
    ThresholdRule,
    WeightedCovariates,
    draw_balanced_assignment,
    enumerate_balanced_assignments,
    estimate_threshold,
    mahalanobis_statistic,
    rerandomize_quantile,
    rerandomize_threshold,
    weighted_mean_covariance,
    weighted_mean_difference,
)
from .simharness import (
    ScenarioConfig,
    SweepResult,
    derive_substream_seed,
    fixed_dataset_conditional_variance,
    load_scenario,
    parse_scenario_text,
    run_replication,
    run_sweep,
    write_results_csv,
)
from .theory import (
    ChiSquareParams,
    VarianceDecomposition,
    chi_square_cdf,
    d1_variance_decomposition,
    expected_beta_trace_form,
    predicted_conditional_variance,
    projection_apply,
    squared_multiple_correlation,
    threshold_for_alpha,
    trace_truncation_oracle,
    truncated_identity_covariance,
    truncation_oracle_1d,
    variance_reduction_factor,
)

__version__ = "0.1.0"
