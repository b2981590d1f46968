"""One-stage training loop: a warmup period of pure head-loss training,
then per mini-batch the combined objective

    L = contrast_weight * L_contrastive + L_head

with the contrastive gradient injected at the embedding output and the head
gradient at the logits. A momentum encoder fills the positive/negative queues
every step once active; the contrastive term switches on when both queues
have cycled past their capacity. Everything is driven by one seeded RNG so a
run is bit-reproducible.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bound import BoundSettings, bound_trace, trace_from_records
from .errors import ConfigError, TrainingDivergenceError
from .losses import LOG_EPS
from .net import (
    ForwardRecord,
    ModelParams,
    OptimizerState,
    backward,
    forward,
    init_params,
    sgd_step,
)
from .queues import MomentumEncoder, SampleQueues, encode_and_route

logger = logging.getLogger(__name__)

METHODS = ("contrastive", "ce")
HEADS = ("ce", "sat-em")


@dataclass(frozen=True)
class TrainConfig:
    """All hyper-parameters of one training run. `hidden` lists the affine
    layer widths of the embedding stack; its last entry is the embedding
    dimension. Data dimensions (input width, class count) come from the
    dataset itself."""

    hidden: tuple[int, ...] = (64, 32)
    epochs: int = 60
    batch_size: int = 64
    warmup_epochs: int = 20          # head-only epochs before the queues start
    contrast_weight: float = 0.5
    momentum_coeff: float = 0.99
    queue_size: int | None = None    # None: 300/3000/10000 by class count
    temperature: float = 0.1
    lr: float = 0.1
    lr_decay: float = 0.5
    lr_decay_every: int = 25
    sgd_momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    method: str = "contrastive"      # "contrastive" | "ce"
    head: str = "ce"                 # "ce" | "sat-em"
    sat_momentum: float = 0.9
    entropy_weight: float = 0.01
    sat_warmup_epochs: int | None = None  # None: same as warmup_epochs

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if self.contrast_weight < 0.0:
            raise ConfigError("contrast_weight must be >= 0")
        if not 0.0 <= self.momentum_coeff < 1.0:
            raise ConfigError("momentum_coeff must be in [0, 1)")
        if self.queue_size is not None and self.queue_size < 1:
            raise ConfigError("queue_size must be >= 1")
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be > 0")
        if self.lr_decay_every < 1:
            raise ConfigError("lr_decay_every must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}")
        if not 0.0 < self.sat_momentum < 1.0:
            raise ConfigError("sat_momentum must be in (0, 1)")
        if self.entropy_weight < 0.0:
            raise ConfigError("entropy_weight must be >= 0")
        if not hidden_ok(self.hidden):
            raise ConfigError("hidden must be a non-empty tuple of widths >= 1")

    def effective_queue_size(self, n_classes: int) -> int:
        if self.queue_size is not None:
            return self.queue_size
        if n_classes <= 10:
            return 300
        if n_classes <= 100:
            return 3000
        return 10000

    def effective_sat_warmup(self) -> int:
        return (self.warmup_epochs if self.sat_warmup_epochs is None
                else self.sat_warmup_epochs)


def hidden_ok(hidden) -> bool:
    return (isinstance(hidden, tuple) and len(hidden) >= 1
            and all(isinstance(h, int) and h >= 1 for h in hidden))


@dataclass
class EpochStats:
    epoch: int
    head_loss: float
    contrast_loss: float
    train_accuracy: float
    test_accuracy: float
    var_intra: float
    classifier_norm: float
    empirical_mh: float
    bound: float
    train_l0: float
    test_l0: float
    gap: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    skipped_anchors: int = 0  # anchors dropped for having no positives


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Step-decayed learning rate: lr * decay^floor(epoch/interval)."""
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_every)


def batch_contrastive_term(record: ForwardRecord, labels: np.ndarray,
                           queues: SampleQueues, tau: float,
                           n_classes: int | None = None
                           ) -> tuple[float, np.ndarray, int]:
    """Mean contrastive loss over the batch's usable anchors and its gradient
    at the (non-normalized) embedding output, including the unit-sphere
    projection Jacobian. Anchors whose label has no queued positives, or
    whose embedding has zero norm, are skipped. Returns (mean loss, gradient
    matrix, anchors used)."""
    emb = record.embedding
    norms = np.linalg.norm(emb, axis=1)
    alive = norms > 0.0
    z = emb / np.where(alive, norms, 1.0)[:, None]
    probs = record.probs if n_classes is None else record.probs[:, :n_classes]
    sr = probs.max(axis=1)
    n, dim = z.shape
    grad_z = np.zeros((n, dim))
    losses = np.zeros(n)
    used_mask = np.zeros(n, dtype=bool)
    labels = np.asarray(labels)
    for y in np.unique(labels):
        pos = queues.select_positives(int(y))
        if pos.shape[0] == 0:
            continue
        neg = queues.select_negatives(int(y))
        rows = np.flatnonzero((labels == y) & alive)
        if rows.size == 0:
            continue
        zg = z[rows]
        sims_p = zg @ pos.T / tau                       # (g, |P|)
        sims_n = (zg @ neg.T / tau if neg.shape[0]
                  else np.zeros((len(rows), 0)))        # (g, |N|)
        m = sims_p.max(axis=1)
        if sims_n.shape[1]:
            m = np.maximum(m, sims_n.max(axis=1))
        ep = np.exp(sims_p - m[:, None])
        en = np.exp(sims_n - m[:, None])
        sn = en.sum(axis=1)
        losses[rows] = sr[rows] * np.log1p(sn[:, None] / ep).mean(axis=1)
        den = ep + sn[:, None]
        gz = (1.0 - ep / den) @ pos
        if neg.shape[0]:
            gz = gz - (en * (1.0 / den).sum(axis=1)[:, None]) @ neg
        grad_z[rows] = (sr[rows] / (-tau * pos.shape[0]))[:, None] * gz
        used_mask[rows] = True
    used = int(used_mask.sum())
    if used == 0:
        return 0.0, np.zeros((n, dim)), 0
    # chain rule through z = c/|c|: grad_c = (grad_z - z (z.grad_z)) / |c|,
    # then the mean over used anchors
    grad_z /= used
    grad_c = (grad_z - z * (z * grad_z).sum(axis=1, keepdims=True))
    grad_c /= np.where(alive, norms, 1.0)[:, None]
    return float(losses[used_mask].sum() / used), grad_c, used


def _one_hot(y: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((len(y), width))
    out[np.arange(len(y)), y] = 1.0
    return out


def _ce_head(record: ForwardRecord, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy at the true labels and the gradient of that mean
    w.r.t. the logits."""
    n = len(y)
    p_true = record.probs[np.arange(n), y]
    loss = float(-np.log(np.maximum(p_true, LOG_EPS)).mean())
    grad = (record.probs - _one_hot(y, record.probs.shape[1])) / n
    return loss, grad


def _sat_em_head(record: ForwardRecord, y: np.ndarray, idx: np.ndarray,
                 targets: np.ndarray, m_sat: float, beta_em: float
                 ) -> tuple[float, np.ndarray]:
    """Soft-target abstention head: update the per-sample targets with the
    current predictions, then compute the mean loss and its logits gradient.
    The abstention logit is the last output."""
    probs = record.probs
    n, k_ext = probs.shape
    targets[idx] = m_sat * targets[idx] + (1.0 - m_sat) * probs
    t_y = targets[idx, y]
    logp = np.log(np.maximum(probs, LOG_EPS))
    rows = np.arange(n)
    loss_vec = t_y * (-logp[rows, y]) + (1.0 - t_y) * (-logp[rows, -1])
    grad = probs.copy()
    grad[rows, y] -= t_y
    grad[rows, -1] -= 1.0 - t_y
    if beta_em != 0.0:
        h = -(probs * logp).sum(axis=1)
        loss_vec = loss_vec + beta_em * h
        grad += beta_em * (-probs * (logp + h[:, None]))
    return float(loss_vec.mean()), grad / n


def train(x_train: np.ndarray, y_train: np.ndarray, x_test: np.ndarray,
          y_test: np.ndarray, cfg: TrainConfig,
          bound_settings: BoundSettings | None = None,
          epoch_callback=None) -> tuple[ModelParams, TrainHistory]:
    """Run the full training loop; returns the final parameters and the
    per-epoch history (losses, accuracies, bound trace quantities).

    `epoch_callback(epoch, params, encoder, queues, sat_targets)` is invoked
    after every epoch, mainly as a test probe."""
    x_train = np.asarray(x_train, dtype=np.float64)
    x_test = np.asarray(x_test, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_test = np.asarray(y_test, dtype=np.int64)
    if len(x_train) == 0 or len(x_test) == 0:
        raise ConfigError("training and test sets must be non-empty")
    if x_test.ndim != 2 or x_test.shape[1] != x_train.shape[1]:
        raise ConfigError("train and test feature dimensions differ")
    n_classes = int(y_train.max()) + 1
    if n_classes < 2:
        raise ConfigError("need at least 2 classes")
    if y_train.min() < 0 or y_test.min() < 0 or y_test.max() >= n_classes:
        raise ConfigError("labels must lie in [0, n_classes)")
    if bound_settings is None:
        bound_settings = BoundSettings()
    if cfg.contrast_weight > 0.0 and cfg.warmup_epochs >= cfg.epochs \
            and cfg.method == "contrastive":
        warnings.warn("warmup_epochs >= epochs: the contrastive term will "
                      "never activate", UserWarning, stacklevel=2)

    contrastive = cfg.method == "contrastive"
    abstain_head = cfg.head == "sat-em"
    n_out = n_classes + 1 if abstain_head else n_classes
    rng = np.random.default_rng(cfg.seed)
    params = init_params(x_train.shape[1], cfg.hidden, n_out, rng)
    state = OptimizerState.for_params(params, lr=cfg.lr,
                                      momentum=cfg.sgd_momentum,
                                      weight_decay=cfg.weight_decay)
    queue_size = cfg.effective_queue_size(n_classes)
    sat_warmup = cfg.effective_sat_warmup()
    encoder: MomentumEncoder | None = None
    queues: SampleQueues | None = None
    sat_targets = _one_hot(y_train, n_out) if abstain_head else None

    history = TrainHistory()
    n = len(x_train)
    for epoch in range(cfg.epochs):
        state.lr = lr_at(cfg, epoch)
        if contrastive and epoch == cfg.warmup_epochs:
            encoder = MomentumEncoder(params, cfg.momentum_coeff)
            queues = SampleQueues(queue_size, params.embedding_dim)
        perm = rng.permutation(n)
        head_sum = 0.0
        contrast_sum = 0.0
        contrast_anchors = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            record = forward(params, xb)
            if abstain_head and epoch >= sat_warmup:
                head_loss, grad_logits = _sat_em_head(
                    record, yb, idx, sat_targets, cfg.sat_momentum,
                    cfg.entropy_weight)
            else:
                head_loss, grad_logits = _ce_head(record, yb)
            if not np.isfinite(head_loss):
                raise TrainingDivergenceError(
                    f"non-finite head loss at epoch {epoch}, step "
                    f"{start // cfg.batch_size}")
            head_sum += head_loss * len(idx)

            grad_embedding = np.zeros((len(idx), params.embedding_dim))
            if (contrastive and cfg.contrast_weight > 0.0
                    and epoch >= cfg.warmup_epochs and queues.ready()):
                c_loss, c_grad, used = batch_contrastive_term(
                    record, yb, queues, cfg.temperature, n_classes=n_classes)
                if not np.isfinite(c_loss):
                    raise TrainingDivergenceError(
                        f"non-finite contrastive loss at epoch {epoch}, step "
                        f"{start // cfg.batch_size}")
                if used:
                    grad_embedding = cfg.contrast_weight * c_grad
                    contrast_sum += c_loss * used
                    contrast_anchors += used
                history.skipped_anchors += len(idx) - used
                if used == 0:
                    logger.debug("epoch %d: batch with no usable anchors",
                                 epoch)
            grads = backward(params, record, grad_logits, grad_embedding)
            if contrastive and epoch >= cfg.warmup_epochs:
                encode_and_route(encoder, queues, xb, yb,
                                 n_classes=n_classes)
                encoder.update(params)
            sgd_step(params, state, grads)

        rec_train = forward(params, x_train)
        rec_test = forward(params, x_test)
        stats_epoch = trace_from_records(epoch, params, rec_train, y_train,
                                         rec_test, y_test, bound_settings,
                                         n_classes)
        train_acc = float((rec_train.probs[:, :n_classes].argmax(axis=1)
                           == y_train).mean())
        test_acc = float((rec_test.probs[:, :n_classes].argmax(axis=1)
                          == y_test).mean())
        report = bound_trace([stats_epoch], bound_settings)[0]
        history.epochs.append(EpochStats(
            epoch=epoch,
            head_loss=head_sum / n,
            contrast_loss=(contrast_sum / contrast_anchors
                           if contrast_anchors else 0.0),
            train_accuracy=train_acc,
            test_accuracy=test_acc,
            var_intra=stats_epoch.var_intra,
            classifier_norm=stats_epoch.classifier_norm,
            empirical_mh=stats_epoch.empirical_mh,
            bound=report.bound_value,
            train_l0=report.train_selective_loss,
            test_l0=report.test_selective_loss,
            gap=report.gap,
        ))
        if epoch_callback is not None:
            epoch_callback(epoch, params, encoder, queues, sat_targets)
    return params, history
