"""Membership-inference auditing of differentially private location aggregates."""

from .data import (
    AggregateMatrix,
    NoisyAggregate,
    ObservationVector,
    TraceDataset,
    TraceMatrix,
    aggregate,
    clip_trace,
    generate_synthetic_traces,
    ingest_traces_csv,
    positive_cells,
    positive_observations,
    split_dataset,
    write_traces_csv,
)
from .mechanisms import (
    MechanismSpec,
    PrivacyRegionPoint,
    composition_deltas,
    expected_attack_accuracy,
    expected_attack_accuracy_from_budget,
    gaussian_sigma,
    mechanism_cdf,
    perturb,
    sensitivity,
    tradeoff_min_error,
)
from .attacks import (
    BinomialPair,
    EmpiricalPair,
    GaussianPair,
    PerCellThresholds,
    ShadowSet,
    analytic_one_threshold_model,
    analytic_two_threshold_model,
    clt_binomial_approx,
    decide,
    empirical_score_model,
    estimate_threshold_fixed_error,
    estimate_threshold_max_acc,
    generate_shadow_set,
    informed_one_threshold_model,
    model_accuracy,
    per_cell_error_rates,
    per_cell_thresholds_fixed_error,
    per_cell_thresholds_max_acc,
    poisson_binomial_pmf,
    reference_attack_score,
    score_one,
    score_two,
    shadow_features,
)
from .mlp import (
    MlpModel,
    TrainConfig,
    approximation_error_sweep,
    encode_one_threshold,
    encode_two_threshold,
    init_model,
    load_model,
    mlp_forward,
    mlp_train,
    save_model,
    weight_report,
)
from .evaluation import (
    GameConfig,
    RocCurve,
    TrialRecord,
    accuracy_from_errors,
    gap_report,
    roc_from_scores,
    run_game,
    sweep_positive_observations,
    sweep_shadow_count,
)
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
