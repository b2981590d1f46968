"""Selective classification with confidence-weighted contrastive feature
learning: training, abstention evaluation, and generalization-bound
monitoring."""

from .bound import (
    BoundInputs,
    BoundReport,
    BoundSettings,
    TraceInputs,
    bound_trace,
    effective_margin_scale,
    empirical_margin_loss,
    generalization_bound,
    intra_class_variance,
)
from .config import ExperimentConfig, load_config, parse_config_text
from .data import (
    DatasetSpec,
    DataSplit,
    LabeledData,
    build_dataset,
    fingerprint,
    gaussian_mixture,
    load_csv,
    load_idx,
)
from .errors import (
    ConfigError,
    DegenerateEmbeddingError,
    EmptyPositiveSetError,
    FormatError,
    InputError,
    SelContrastError,
    TrainingDivergenceError,
    UndefinedRiskError,
)
from .estimator import ContrastiveSelectiveClassifier
from .evaluation import (
    RiskCoveragePoint,
    ScoredPredictions,
    coverage_and_risk,
    rank_sum_test,
    risk_coverage_curve,
    score_predictions,
    threshold_for_coverage,
)
from .losses import (
    ContrastiveContext,
    MarginParams,
    contrastive_grad,
    contrastive_loss,
    cross_entropy,
    entropy,
    max_hinge_loss,
    prediction_margin,
    sat_em_loss,
    sat_target_update,
    selective_loss,
    softmax_response,
)
from .net import (
    ForwardRecord,
    ModelParams,
    OptimizerState,
    backward,
    classifier_l2_norm,
    forward,
    init_params,
    load_checkpoint,
    normalize_embedding,
    save_checkpoint,
    sgd_step,
)
from .queues import MomentumEncoder, SampleQueues, encode_and_route
from .runs import RunRecord, compare_runs, run_experiment
from .trainer import (
    TrainConfig,
    TrainHistory,
    batch_contrastive_term,
    lr_at,
    train,
)

__version__ = "0.1.0"
