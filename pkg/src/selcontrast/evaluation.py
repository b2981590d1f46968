"""Selective-classification evaluation: confidence scoring, threshold
calibration for a target coverage, coverage and selective risk, risk-coverage
curves, and the Mann-Whitney rank-sum test used to compare methods across
seeds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UndefinedRiskError
from .net import ModelParams, forward


@dataclass
class ScoredPredictions:
    confidence: np.ndarray  # (n,) softmax response per sample
    predicted: np.ndarray   # (n,) argmax class, lowest index on ties
    true: np.ndarray        # (n,)
    correct: np.ndarray     # (n,) bool

    def __len__(self) -> int:
        return len(self.confidence)


@dataclass
class RiskCoveragePoint:
    target_coverage: float | None
    threshold: float
    realized_coverage: float
    selective_risk: float   # fraction in [0, 1]
    selected_count: int
    error_count: int


def score_predictions(params: ModelParams, x: np.ndarray, y: np.ndarray,
                      n_classes: int | None = None) -> ScoredPredictions:
    """Forward the dataset and score every sample: prediction is the argmax
    class, confidence the maximum class probability. For models with an
    abstention logit, pass n_classes to restrict both to the real classes
    (the softmax normalization still includes the extra logit)."""
    record = forward(params, x)
    probs = record.probs if n_classes is None else record.probs[:, :n_classes]
    predicted = probs.argmax(axis=1)
    y = np.asarray(y, dtype=np.int64)
    return ScoredPredictions(
        confidence=probs.max(axis=1),
        predicted=predicted,
        true=y,
        correct=predicted == y,
    )


def threshold_for_coverage(scores: np.ndarray, c_target: float) -> float:
    """The ceil(c_target*n)-th largest confidence. Selecting at this
    threshold realizes coverage >= c_target; ties at the threshold can only
    raise it."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) == 0:
        raise ConfigError("cannot calibrate a threshold on empty scores")
    if not 0.0 < c_target <= 1.0:
        raise ConfigError(f"target coverage must be in (0, 1], got {c_target}")
    rank = math.ceil(c_target * len(scores))
    descending = np.sort(scores)[::-1]
    return float(descending[rank - 1])


def coverage_and_risk(preds: ScoredPredictions, threshold: float,
                      target_coverage: float | None = None
                      ) -> RiskCoveragePoint:
    """Coverage and selective risk of the rule `predict iff confidence >=
    threshold`."""
    selected = preds.confidence >= threshold
    n_selected = int(selected.sum())
    if n_selected == 0:
        raise UndefinedRiskError(
            f"no sample has confidence >= {threshold}")
    n_errors = int((selected & ~preds.correct).sum())
    return RiskCoveragePoint(
        target_coverage=target_coverage,
        threshold=threshold,
        realized_coverage=n_selected / len(preds),
        selective_risk=n_errors / n_selected,
        selected_count=n_selected,
        error_count=n_errors,
    )


def risk_coverage_curve(preds: ScoredPredictions,
                        targets: list[float]) -> list[RiskCoveragePoint]:
    """One calibrated point per target coverage. Targets must be monotone
    (either direction) and in (0, 1]."""
    targets = list(targets)
    if not targets:
        raise ConfigError("need at least one coverage target")
    ascending = all(a <= b for a, b in zip(targets, targets[1:]))
    descending = all(a >= b for a, b in zip(targets, targets[1:]))
    if not (ascending or descending):
        raise ConfigError("coverage targets must be sorted")
    points = []
    for c in targets:
        h = threshold_for_coverage(preds.confidence, c)
        points.append(coverage_and_risk(preds, h, target_coverage=c))
    return points


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; ties receive the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or sorted_vals[i] != sorted_vals[start]:
            ranks[order[start:i]] = 0.5 * (start + 1 + i)
            start = i
    return ranks


def rank_sum_test(a, b) -> tuple[float, float]:
    """Mann-Whitney U test with midrank ties. Returns (U statistic of the
    first sample, two-sided p from the normal approximation with tie and
    continuity corrections). Degenerate pooled samples (all values equal)
    give p = 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise ConfigError("rank-sum test needs at least 2 values per sample")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum())
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0.0:
        return u1, 1.0
    deviation = abs(u1 - n1 * n2 / 2.0) - 0.5  # continuity correction
    if deviation <= 0.0:
        return u1, 1.0
    z = deviation / math.sqrt(variance)
    return u1, math.erfc(z / math.sqrt(2.0))
