"""Minimal deterministic feed-forward network engine.

The classifier is a composition f = l . c where c is a stack of affine+ReLU
layers producing a feature embedding and l is a single affine layer producing
logits. Gradients can be injected at two points, the logits and the embedding
output, and are propagated by hand; everything runs in float64 so gradient
checks against central finite differences are meaningful.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateEmbeddingError,
    FormatError,
    InputError,
    TrainingDivergenceError,
)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class AffineLayer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)


@dataclass
class ModelParams:
    """Embedding layers (each applied as relu(x @ w + b)) plus a final
    affine classifier. The last embedding layer's width is the embedding
    dimension."""

    embedding: list[AffineLayer]
    classifier: AffineLayer

    @property
    def input_dim(self) -> int:
        return self.embedding[0].w.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embedding[-1].w.shape[1]

    @property
    def output_dim(self) -> int:
        return self.classifier.w.shape[1]

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.embedding:
            out.extend((layer.w, layer.b))
        out.extend((self.classifier.w, self.classifier.b))
        return out


@dataclass
class Gradients:
    embedding: list[AffineLayer]
    classifier: AffineLayer

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.embedding:
            out.extend((layer.w, layer.b))
        out.extend((self.classifier.w, self.classifier.b))
        return out


@dataclass
class OptimizerState:
    """Classic SGD with momentum and decoupled-from-nothing weight decay
    (decay is added to the raw gradient before momentum accumulation)."""

    lr: float
    momentum: float
    weight_decay: float
    buffers: Gradients

    @classmethod
    def for_params(cls, params: ModelParams, lr: float, momentum: float,
                   weight_decay: float) -> "OptimizerState":
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"sgd momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0.0:
            raise ConfigError(f"weight decay must be >= 0, got {weight_decay}")
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        buffers = Gradients(
            embedding=[AffineLayer(np.zeros_like(l.w), np.zeros_like(l.b))
                       for l in params.embedding],
            classifier=AffineLayer(np.zeros_like(params.classifier.w),
                                   np.zeros_like(params.classifier.b)),
        )
        return cls(lr=lr, momentum=momentum, weight_decay=weight_decay,
                   buffers=buffers)


@dataclass
class ForwardRecord:
    """Cached activations for one mini-batch."""

    inputs: np.ndarray            # (n, d)
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]  # post-ReLU; activations[-1] is c(x)
    logits: np.ndarray            # (n, k)
    probs: np.ndarray             # (n, k) softmax rows

    @property
    def embedding(self) -> np.ndarray:
        return self.activations[-1]


def init_params(input_dim: int, hidden: tuple[int, ...], n_out: int,
                rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases. `hidden` must be non-empty; its
    last entry is the embedding dimension."""
    if input_dim < 1 or n_out < 1:
        raise ConfigError("input and output dimensions must be >= 1")
    if not hidden:
        raise ConfigError("at least one embedding layer is required")
    dims = [input_dim, *hidden]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(AffineLayer(
            w=rng.uniform(-limit, limit, size=(fan_in, fan_out)),
            b=np.zeros(fan_out),
        ))
    limit = np.sqrt(6.0 / (hidden[-1] + n_out))
    classifier = AffineLayer(
        w=rng.uniform(-limit, limit, size=(hidden[-1], n_out)),
        b=np.zeros(n_out),
    )
    return ModelParams(embedding=layers, classifier=classifier)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-shifted for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, batch: np.ndarray) -> ForwardRecord:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ConfigError(
            f"batch has shape {batch.shape}, expected (n, {params.input_dim})")
    if not np.isfinite(batch).all():
        raise InputError("batch contains non-finite values")
    pre_acts, acts = [], []
    x = batch
    for layer in params.embedding:
        pre = x @ layer.w + layer.b
        x = np.maximum(pre, 0.0)
        pre_acts.append(pre)
        acts.append(x)
    logits = x @ params.classifier.w + params.classifier.b
    return ForwardRecord(inputs=batch, pre_activations=pre_acts,
                         activations=acts, logits=logits,
                         probs=softmax(logits))


def normalize_embedding(embedding: np.ndarray) -> np.ndarray:
    """Project one embedding vector onto the unit sphere."""
    norm = np.linalg.norm(embedding)
    if norm == 0.0:
        raise DegenerateEmbeddingError("embedding has zero norm")
    return embedding / norm


def normalize_rows(embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise unit normalization; returns (unit rows, original norms)."""
    norms = np.linalg.norm(embeddings, axis=1)
    if (norms == 0.0).any():
        dead = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateEmbeddingError(f"embedding row {dead} has zero norm")
    return embeddings / norms[:, None], norms


def backward(params: ModelParams, record: ForwardRecord,
             grad_logits: np.ndarray, grad_embedding: np.ndarray) -> Gradients:
    """Backpropagate the two injected gradients. Returns d(sum of injected
    directional losses)/d(parameter); the logits injection flows through the
    classifier and the embedding stack, the embedding injection through the
    embedding stack only."""
    n = record.inputs.shape[0]
    if grad_logits.shape != record.logits.shape:
        raise ConfigError(
            f"grad_logits shape {grad_logits.shape} != {record.logits.shape}")
    if grad_embedding.shape != (n, params.embedding_dim):
        raise ConfigError(
            f"grad_embedding shape {grad_embedding.shape} != "
            f"{(n, params.embedding_dim)}")
    emb = record.embedding
    g_cls = AffineLayer(w=emb.T @ grad_logits, b=grad_logits.sum(axis=0))
    d = grad_logits @ params.classifier.w.T + grad_embedding
    g_layers: list[AffineLayer] = [None] * len(params.embedding)
    for i in range(len(params.embedding) - 1, -1, -1):
        d_pre = d * (record.pre_activations[i] > 0.0)
        below = record.activations[i - 1] if i > 0 else record.inputs
        g_layers[i] = AffineLayer(w=below.T @ d_pre, b=d_pre.sum(axis=0))
        if i > 0:
            d = d_pre @ params.embedding[i].w.T
    return Gradients(embedding=g_layers, classifier=g_cls)


def sgd_step(params: ModelParams, state: OptimizerState,
             grads: Gradients) -> None:
    """One momentum-SGD update, in place: buf = mu*buf + (grad + wd*param),
    param -= lr*buf."""
    for p, g, buf in zip(params.arrays(), grads.arrays(),
                         state.buffers.arrays()):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} != param {p.shape}")
        if not np.isfinite(g).all():
            raise TrainingDivergenceError("non-finite gradient in sgd_step")
        np.multiply(buf, state.momentum, out=buf)
        buf += g
        if state.weight_decay != 0.0:
            buf += state.weight_decay * p
        p -= state.lr * buf
        if not np.isfinite(p).all():
            raise TrainingDivergenceError("non-finite parameter after update")


def classifier_l2_norm(params: ModelParams) -> float:
    """L2 norm of the final classification layer, weights and bias flattened
    into one vector."""
    c = params.classifier
    return float(np.sqrt(np.sum(c.w ** 2) + np.sum(c.b ** 2)))


def save_checkpoint(path, params: ModelParams, seed: int, *,
                    head: str = "ce", n_classes: int | None = None,
                    epoch: int | None = None) -> None:
    """Self-describing .npz container: layer dimensions, float64 parameters,
    the training seed and head metadata. Documented in the README."""
    payload = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION),
        "dims": np.array([params.input_dim,
                          *[l.w.shape[1] for l in params.embedding],
                          params.output_dim]),
        "seed": np.array(seed),
        "head": np.array(head),
        "n_classes": np.array(params.output_dim if n_classes is None
                              else n_classes),
        "epoch": np.array(-1 if epoch is None else epoch),
        "classifier_w": params.classifier.w,
        "classifier_b": params.classifier.b,
    }
    for i, layer in enumerate(params.embedding):
        payload[f"embedding_{i}_w"] = layer.w
        payload[f"embedding_{i}_b"] = layer.b
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Returns (params, metadata). Metadata keys: seed, head, n_classes,
    epoch."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if "format_version" not in data:
        raise FormatError(f"{path} is not a selcontrast checkpoint")
    version = int(data["format_version"])
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    dims = data["dims"].tolist()
    layers = []
    for i in range(len(dims) - 2):
        layers.append(AffineLayer(
            w=np.array(data[f"embedding_{i}_w"], dtype=np.float64),
            b=np.array(data[f"embedding_{i}_b"], dtype=np.float64)))
    params = ModelParams(
        embedding=layers,
        classifier=AffineLayer(
            w=np.array(data["classifier_w"], dtype=np.float64),
            b=np.array(data["classifier_b"], dtype=np.float64)))
    meta = {
        "seed": int(data["seed"]),
        "head": str(data["head"]),
        "n_classes": int(data["n_classes"]),
        "epoch": int(data["epoch"]),
    }
    return params, meta
