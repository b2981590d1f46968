"""Margin-based generalization bound for selective classifiers.

Computes the intra-class feature variance, the effective margin scale, the
empirical max-hinge loss, and the resulting bound value

    empirical_mh + 4*sqrt((|l|^2*Var + 4*r^2 + r^2*|l|^2*ln(6m/delta))
                          / (r^2*m*|l|^2))

where |l| is the classifier norm and r the effective margin scale. Per-epoch
traces of these quantities track how feature aggregation tightens the bound
during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .losses import MarginParams
from .net import ModelParams, classifier_l2_norm, forward


@dataclass(frozen=True)
class BoundSettings:
    """Margin parameters and evaluation constants for bound traces. The
    threshold and penalty apply to both the hinge surrogate (via the shifted
    confidence) and the selective 0/1 loss columns."""

    margins: MarginParams = field(default_factory=MarginParams)
    delta: float = 0.05
    threshold: float = 0.0
    penalty: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0, 1), got {self.delta}")


@dataclass
class BoundInputs:
    var_intra: float
    classifier_norm: float
    margin_scale: float
    sample_count: int
    delta: float
    empirical_margin_loss: float

    def __post_init__(self):
        if self.classifier_norm <= 0.0:
            raise ConfigError("degenerate classifier: zero L2 norm")
        if self.sample_count < 2:
            raise ConfigError("bound needs at least 2 samples")
        if self.var_intra < 0.0:
            raise ConfigError("intra-class variance must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0, 1), got {self.delta}")


@dataclass
class BoundReport:
    epoch: int
    inputs: BoundInputs
    bound_value: float
    train_selective_loss: float
    test_selective_loss: float
    gap: float


def intra_class_variance(embeddings: np.ndarray, labels: np.ndarray,
                         n_classes: int) -> float:
    """Mean over all n_classes of the trace of the per-class population
    covariance of the embeddings. Empty classes contribute zero while still
    counting in the denominator."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for c in range(n_classes):
        block = embeddings[labels == c]
        if block.shape[0] == 0:
            continue
        centered = block - block.mean(axis=0)
        # trace of the population covariance = mean squared deviation norm
        total += float((centered ** 2).sum() / block.shape[0])
    return total / n_classes


def effective_margin_scale(mp: MarginParams) -> float:
    """min{rho/(4*alpha), rho_prime/(4*beta*lam + 2*alpha)}."""
    return min(mp.rho / (4.0 * mp.alpha),
               mp.rho_prime / (4.0 * mp.beta * mp.lam + 2.0 * mp.alpha))


def confidence_and_margin(probs: np.ndarray,
                          y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmax response and prediction margin
    probs[y] - max_{j != y} probs[j]."""
    idx = np.arange(len(y))
    g = probs.max(axis=1)
    p_true = probs[idx, y]
    masked = probs.copy()
    masked[idx, y] = -np.inf
    return g, p_true - masked.max(axis=1)


def max_hinge_values(g: np.ndarray, gamma: np.ndarray, threshold: float,
                     mp: MarginParams) -> np.ndarray:
    """Vectorized max-hinge surrogate at shifted confidence g - threshold."""
    shifted = (g - threshold) / mp.rho_prime
    accept = 1.0 + 0.5 * mp.alpha * (shifted - gamma / mp.rho)
    reject = mp.lam * (1.0 - mp.beta * shifted)
    return np.maximum(np.maximum(accept, 0.0), np.maximum(reject, 0.0))


def selective_loss_values(g: np.ndarray, correct: np.ndarray,
                          threshold: float, penalty: float) -> np.ndarray:
    """Vectorized penalized selective 0/1 loss."""
    return np.where(g >= threshold, np.where(correct, 0.0, 1.0), penalty)


def empirical_margin_loss(params: ModelParams, x: np.ndarray, y: np.ndarray,
                          threshold: float, mp: MarginParams,
                          n_classes: int | None = None) -> float:
    """Mean max-hinge loss over a dataset, with softmax-response confidence
    shifted by the selection threshold."""
    if len(x) == 0:
        raise ConfigError("empirical margin loss needs a non-empty dataset")
    record = forward(params, x)
    probs = record.probs if n_classes is None else record.probs[:, :n_classes]
    y = np.asarray(y, dtype=np.int64)
    g, gamma = confidence_and_margin(probs, y)
    return float(max_hinge_values(g, gamma, threshold, mp).mean())


def generalization_bound(inputs: BoundInputs) -> float:
    """Bound value for the given inputs; always >= the empirical term."""
    norm_sq = inputs.classifier_norm ** 2
    scale_sq = inputs.margin_scale ** 2
    m = inputs.sample_count
    num = (norm_sq * inputs.var_intra + 4.0 * scale_sq
           + scale_sq * norm_sq * np.log(6.0 * m / inputs.delta))
    return inputs.empirical_margin_loss + 4.0 * float(
        np.sqrt(num / (scale_sq * m * norm_sq)))


@dataclass
class TraceInputs:
    """Per-epoch raw quantities from which one BoundReport is assembled."""

    epoch: int
    var_intra: float
    classifier_norm: float
    empirical_mh: float
    train_l0: float
    test_l0: float
    sample_count: int


def bound_trace(per_epoch: list[TraceInputs],
                settings: BoundSettings) -> list[BoundReport]:
    """One BoundReport per epoch from precomputed trace inputs."""
    scale = effective_margin_scale(settings.margins)
    reports = []
    for row in per_epoch:
        inputs = BoundInputs(
            var_intra=row.var_intra,
            classifier_norm=row.classifier_norm,
            margin_scale=scale,
            sample_count=row.sample_count,
            delta=settings.delta,
            empirical_margin_loss=row.empirical_mh,
        )
        reports.append(BoundReport(
            epoch=row.epoch,
            inputs=inputs,
            bound_value=generalization_bound(inputs),
            train_selective_loss=row.train_l0,
            test_selective_loss=row.test_l0,
            gap=row.test_l0 - row.train_l0,
        ))
    return reports


def trace_from_records(epoch: int, params: ModelParams, rec_train,
                       y_train: np.ndarray, rec_test, y_test: np.ndarray,
                       settings: BoundSettings, n_classes: int) -> TraceInputs:
    """One epoch's trace quantities from already-computed forward records."""
    y_train = np.asarray(y_train, dtype=np.int64)
    y_test = np.asarray(y_test, dtype=np.int64)
    probs_train = rec_train.probs[:, :n_classes]
    probs_test = rec_test.probs[:, :n_classes]
    g_tr, gamma_tr = confidence_and_margin(probs_train, y_train)
    g_te, _ = confidence_and_margin(probs_test, y_test)
    correct_tr = probs_train.argmax(axis=1) == y_train
    correct_te = probs_test.argmax(axis=1) == y_test
    s = settings
    return TraceInputs(
        epoch=epoch,
        var_intra=intra_class_variance(rec_train.embedding, y_train,
                                       n_classes),
        classifier_norm=classifier_l2_norm(params),
        empirical_mh=float(max_hinge_values(g_tr, gamma_tr, s.threshold,
                                            s.margins).mean()),
        train_l0=float(selective_loss_values(g_tr, correct_tr, s.threshold,
                                             s.penalty).mean()),
        test_l0=float(selective_loss_values(g_te, correct_te, s.threshold,
                                            s.penalty).mean()),
        sample_count=len(y_train),
    )


def trace_inputs(epoch: int, params: ModelParams, x_train: np.ndarray,
                 y_train: np.ndarray, x_test: np.ndarray, y_test: np.ndarray,
                 settings: BoundSettings, n_classes: int) -> TraceInputs:
    """Compute one epoch's trace quantities from live parameters."""
    return trace_from_records(epoch, params, forward(params, x_train),
                              y_train, forward(params, x_test), y_test,
                              settings, n_classes)
