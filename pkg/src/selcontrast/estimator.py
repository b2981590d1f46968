"""Scikit-learn style estimator wrapping the training loop, so the selective
classifier composes with pipelines, grid search and friends."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bound import BoundSettings
from .evaluation import threshold_for_coverage
from .net import forward
from .trainer import TrainConfig, train


class ContrastiveSelectiveClassifier(BaseEstimator, ClassifierMixin):
    """MLP classifier trained with a confidence-weighted contrastive feature
    objective next to the classification head; exposes softmax-response
    confidences for abstention.

    Parameters mirror TrainConfig; `contrast_weight=0` or `method="ce"`
    recovers a plain cross-entropy baseline.
    """

    def __init__(self, hidden_sizes=(64, 32), epochs=50, batch_size=64,
                 warmup_epochs=10, contrast_weight=0.5, momentum_coeff=0.99,
                 queue_size=None, temperature=0.1, lr=0.1, lr_decay=0.5,
                 lr_decay_every=25, sgd_momentum=0.9, weight_decay=5e-4,
                 method="contrastive", head="ce", sat_momentum=0.9,
                 entropy_weight=0.01, sat_warmup_epochs=None, random_state=0):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.warmup_epochs = warmup_epochs
        self.contrast_weight = contrast_weight
        self.momentum_coeff = momentum_coeff
        self.queue_size = queue_size
        self.temperature = temperature
        self.lr = lr
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.sgd_momentum = sgd_momentum
        self.weight_decay = weight_decay
        self.method = method
        self.head = head
        self.sat_momentum = sat_momentum
        self.entropy_weight = entropy_weight
        self.sat_warmup_epochs = sat_warmup_epochs
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden=tuple(int(h) for h in self.hidden_sizes),
            epochs=self.epochs,
            batch_size=self.batch_size,
            warmup_epochs=self.warmup_epochs,
            contrast_weight=self.contrast_weight,
            momentum_coeff=self.momentum_coeff,
            queue_size=self.queue_size,
            temperature=self.temperature,
            lr=self.lr,
            lr_decay=self.lr_decay,
            lr_decay_every=self.lr_decay_every,
            sgd_momentum=self.sgd_momentum,
            weight_decay=self.weight_decay,
            seed=self.random_state,
            method=self.method,
            head=self.head,
            sat_momentum=self.sat_momentum,
            entropy_weight=self.entropy_weight,
            sat_warmup_epochs=self.sat_warmup_epochs,
        )

    def fit(self, X, y, eval_set=None, bound_settings: BoundSettings = None):
        """Train on (X, y). `eval_set=(X_val, y_val)` feeds the per-epoch
        test-side history columns; without it the training split is reused
        there."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        self.n_features_in_ = X.shape[1]
        if eval_set is None:
            x_val, y_val = X, y_idx
        else:
            x_val = check_array(eval_set[0], dtype=np.float64)
            y_val = np.searchsorted(self.classes_, eval_set[1])
        self.model_, self.history_ = train(
            X, y_idx, x_val, y_val, self._config(),
            bound_settings=bound_settings)
        return self

    def _probs(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        probs = forward(self.model_, X).probs
        return probs[:, :len(self.classes_)]

    def predict(self, X):
        probs = self._probs(X)
        return self.classes_[probs.argmax(axis=1)]

    def predict_proba(self, X):
        """Class probabilities over classes_. For the abstention head the
        extra logit is dropped and rows renormalized."""
        probs = self._probs(X)
        return probs / probs.sum(axis=1, keepdims=True)

    def confidence(self, X) -> np.ndarray:
        """Softmax-response confidence per sample (across the real classes,
        un-renormalized when the abstention head is active)."""
        return self._probs(X).max(axis=1)

    def selection_threshold(self, X, coverage: float) -> float:
        """Confidence threshold realizing at least the given coverage on X."""
        return threshold_for_coverage(self.confidence(X), coverage)

    def predict_with_reject(self, X, threshold: float):
        """Returns (predictions, accepted mask); predictions on rejected rows
        are still filled in but flagged False."""
        probs = self._probs(X)
        return (self.classes_[probs.argmax(axis=1)],
                probs.max(axis=1) >= threshold)
