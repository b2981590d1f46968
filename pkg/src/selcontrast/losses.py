"""Scalar losses and their analytic gradients.

Covers the plain cross-entropy head, softmax-response confidence, the
confidence-weighted supervised contrastive loss over queued positives and
negatives, the penalized selective 0/1 loss, its max-hinge surrogate, and the
soft-target abstention head (self-adaptive targets plus entropy
regularization).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyPositiveSetError

LOG_EPS = 1e-12  # probabilities are clamped at this value inside logarithms


def cross_entropy(probs: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Negative log likelihood of class y plus the gradient w.r.t. logits,
    probs - onehot(y). The gradient uses the unclamped softmax identity."""
    k = probs.shape[0]
    if not 0 <= y < k:
        raise ConfigError(f"label {y} out of range for {k} classes")
    loss = -np.log(max(probs[y], LOG_EPS))
    grad = probs.copy()
    grad[y] -= 1.0
    return float(loss), grad


def softmax_response(probs: np.ndarray) -> float:
    """Maximum predicted class probability, the confidence function g."""
    return float(probs.max())


@dataclass
class ContrastiveContext:
    """One anchor's view of the queues: its unit embedding, its own softmax
    response, and the stored unit features of same-class correct predictions
    (positives) and same-class misclassifications (negatives).

    The anchor is allowed off the unit sphere so the loss can be probed with
    finite differences; training always passes a normalized anchor.
    """

    anchor_z: np.ndarray
    sr: float
    positives: np.ndarray  # (|P|, e)
    negatives: np.ndarray  # (|N|, e), may be empty
    tau: float = 0.1

    def __post_init__(self):
        self.anchor_z = np.asarray(self.anchor_z, dtype=np.float64)
        self.positives = np.asarray(self.positives, dtype=np.float64)
        self.negatives = np.asarray(self.negatives, dtype=np.float64)
        if self.negatives.size == 0:
            self.negatives = self.negatives.reshape(0, self.anchor_z.shape[0])
        if self.tau <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")
        if not 0.0 < self.sr <= 1.0:
            raise ConfigError(f"softmax response must be in (0, 1], got {self.sr}")
        for name, block in (("positives", self.positives),
                            ("negatives", self.negatives)):
            if block.shape[0] and np.abs(
                    np.linalg.norm(block, axis=1) - 1.0).max() > 1e-9:
                raise ConfigError(f"{name} must be unit vectors")


def _similarity_terms(ctx: ContrastiveContext):
    """Shifted exponentials shared by the loss and its gradient."""
    sims_p = ctx.positives @ ctx.anchor_z / ctx.tau
    sims_n = ctx.negatives @ ctx.anchor_z / ctx.tau
    m = sims_p.max()
    if sims_n.size:
        m = max(m, sims_n.max())
    ep = np.exp(sims_p - m)
    en = np.exp(sims_n - m)
    return ep, en


def contrastive_loss(ctx: ContrastiveContext) -> float:
    """Confidence-weighted contrastive loss: the anchor's softmax response
    times the mean, over positives p, of -log softmax of sim(z, z_p) against
    the negatives plus that one positive. Non-negative because each
    denominator contains its numerator."""
    if ctx.positives.shape[0] == 0:
        raise EmptyPositiveSetError("anchor has no positive samples")
    ep, en = _similarity_terms(ctx)
    # -log(ep/(ep+sum(en))) = log1p(sum(en)/ep), exact zero when no negatives
    return float(ctx.sr * np.mean(np.log1p(en.sum() / ep)))


def contrastive_grad(ctx: ContrastiveContext) -> np.ndarray:
    """Analytic gradient of contrastive_loss w.r.t. the anchor embedding z.
    The confidence weight and the queued vectors are constants. Matches
    central finite differences of the loss to ~1e-10 relative."""
    if ctx.positives.shape[0] == 0:
        raise EmptyPositiveSetError("anchor has no positive samples")
    ep, en = _similarity_terms(ctx)
    n_pos = ctx.positives.shape[0]
    den = ep + en.sum()                 # per-positive denominators (shifted)
    frac_p = ep / den
    inv_sum = (1.0 / den).sum()
    grad = (1.0 - frac_p) @ ctx.positives
    if en.size:
        grad = grad - (en * inv_sum) @ ctx.negatives
    return (ctx.sr / (-ctx.tau * n_pos)) * grad


def prediction_margin(probs: np.ndarray, y: int) -> float:
    """probs[y] minus the largest other-class probability; positive iff the
    prediction is correct with a strict margin."""
    k = probs.shape[0]
    if k < 2:
        raise ConfigError("margin needs at least two classes")
    if not 0 <= y < k:
        raise ConfigError(f"label {y} out of range for {k} classes")
    others = np.delete(probs, y)
    return float(probs[y] - others.max())


def selective_loss(correct: bool, confidence: float, threshold: float,
                   penalty: float) -> float:
    """Penalized selective 0/1 loss: 0/1 classification loss when selected
    (confidence >= threshold), a fixed penalty when rejected."""
    if confidence >= threshold:
        return 0.0 if correct else 1.0
    return penalty


@dataclass(frozen=True)
class MarginParams:
    """Hinge-shape parameters of the max-hinge surrogate; all must be
    strictly positive."""

    rho: float = 1.0
    rho_prime: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("rho", "rho_prime", "alpha", "beta", "lam"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"margin parameter {name} must be > 0")


def max_hinge_loss(conf_shifted: float, margin: float,
                   mp: MarginParams) -> float:
    """Convex surrogate upper-bounding selective_loss. `conf_shifted` is the
    signed confidence g - threshold, so rejection corresponds to a negative
    value; `margin` is the prediction margin."""
    accept = 1.0 + 0.5 * mp.alpha * (conf_shifted / mp.rho_prime
                                     - margin / mp.rho)
    reject = mp.lam * (1.0 - mp.beta * conf_shifted / mp.rho_prime)
    return max(max(accept, 0.0), max(reject, 0.0))


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats, with 0*log(0) = 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p > 0.0
    return float(-(p[nz] * np.log(p[nz])).sum())


def sat_em_loss(probs_ext: np.ndarray, t_y: float, y: int,
                beta_em: float) -> tuple[float, np.ndarray]:
    """Soft-target abstention loss over k+1 outputs (index k is the
    abstention logit):

        -t_y*log p_y - (1-t_y)*log p_abstain + beta_em*H(p)

    Returns the value and its gradient w.r.t. the k+1 logits. With t_y = 1
    and beta_em = 0 this reduces bitwise to cross-entropy at y."""
    k_ext = probs_ext.shape[0]
    if not 0 <= y < k_ext - 1:
        raise ConfigError(f"label {y} out of range for {k_ext - 1} classes")
    if not 0.0 <= t_y <= 1.0:
        raise ConfigError(f"soft target must be in [0, 1], got {t_y}")
    if beta_em < 0.0:
        raise ConfigError(f"entropy weight must be >= 0, got {beta_em}")
    abstain = k_ext - 1
    logp = np.log(np.maximum(probs_ext, LOG_EPS))
    loss = t_y * (-logp[y]) + (1.0 - t_y) * (-logp[abstain])
    grad = probs_ext.copy()
    grad[y] -= t_y
    grad[abstain] -= 1.0 - t_y
    if beta_em != 0.0:
        h = entropy(probs_ext)
        loss += beta_em * h
        grad += beta_em * (-probs_ext * (logp + h))
    return float(loss), grad


def sat_target_update(t: np.ndarray, probs_ext: np.ndarray,
                      m_sat: float) -> np.ndarray:
    """Exponential moving average of predictions: t <- m*t + (1-m)*p."""
    if t.shape != probs_ext.shape:
        raise ConfigError(
            f"target shape {t.shape} != probabilities shape {probs_ext.shape}")
    return m_sat * t + (1.0 - m_sat) * probs_ext
