"""Momentum encoder and the two fixed-capacity FIFO queues of
(normalized feature, predicted class) tuples.

Entries routed by prediction correctness: the positive queue holds samples
the momentum encoder classified correctly, the negative queue holds
misclassifications. Retrieval is by the class a sample was predicted as, in
insertion order (oldest first).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .net import ModelParams, forward


class MomentumEncoder:
    """Shadow copy of the online model, updated as an exponential moving
    average with coefficient q; never optimized directly."""

    def __init__(self, online_params: ModelParams, q: float):
        if not 0.0 <= q < 1.0:
            raise ConfigError(f"momentum coefficient must be in [0, 1), got {q}")
        self.q = q
        self.params_m = online_params.copy()

    def reinitialize(self, online_params: ModelParams) -> None:
        self.params_m = online_params.copy()

    def update(self, online_params: ModelParams) -> None:
        """theta_m <- q*theta_m + (1-q)*theta, entrywise."""
        q = self.q
        for pm, p in zip(self.params_m.arrays(), online_params.arrays()):
            if pm.shape != p.shape:
                raise ConfigError(
                    f"momentum shape {pm.shape} != online shape {p.shape}")
            pm[...] = q * pm + (1.0 - q) * p


class _Fifo:
    """Ring buffer of (unit feature, predicted class) with oldest-first
    eviction and a lifetime push counter."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.z = np.zeros((capacity, dim))
        self.cls = np.zeros(capacity, dtype=np.int64)
        self.start = 0
        self.length = 0
        self.pushed = 0

    def push(self, z: np.ndarray, cls: int) -> None:
        pos = (self.start + self.length) % self.capacity
        if self.length == self.capacity:
            self.start = (self.start + 1) % self.capacity
        else:
            self.length += 1
        self.z[pos] = z
        self.cls[pos] = cls
        self.pushed += 1

    def ordered(self) -> tuple[np.ndarray, np.ndarray]:
        idx = (self.start + np.arange(self.length)) % self.capacity
        return self.z[idx], self.cls[idx]


class SampleQueues:
    """The positive (correctly classified) and negative (misclassified)
    queues, both of capacity s."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ConfigError(f"queue capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.p_queue = _Fifo(capacity, dim)
        self.n_queue = _Fifo(capacity, dim)

    @property
    def p_pushed(self) -> int:
        return self.p_queue.pushed

    @property
    def n_pushed(self) -> int:
        return self.n_queue.pushed

    def ready(self) -> bool:
        """Both queues have seen strictly more than `capacity` lifetime
        pushes."""
        return self.p_pushed > self.capacity and self.n_pushed > self.capacity

    def select_positives(self, y: int) -> np.ndarray:
        """Stored features of positive-queue entries predicted as class y,
        oldest first."""
        z, cls = self.p_queue.ordered()
        return z[cls == y]

    def select_negatives(self, y: int) -> np.ndarray:
        """Stored features of negative-queue entries misclassified as class
        y, oldest first."""
        z, cls = self.n_queue.ordered()
        return z[cls == y]

    def dump(self, path) -> None:
        """Debug dump: one `queue,index,predicted_class,z...` line per entry."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("queue,index,predicted_class,feature\n")
            for name, fifo in (("p", self.p_queue), ("n", self.n_queue)):
                z, cls = fifo.ordered()
                for i in range(len(cls)):
                    vec = " ".join(repr(float(v)) for v in z[i])
                    fh.write(f"{name},{i},{cls[i]},{vec}\n")


def encode_and_route(enc: MomentumEncoder, queues: SampleQueues,
                     batch: np.ndarray, labels: np.ndarray,
                     n_classes: int | None = None) -> None:
    """Run the momentum encoder on the batch; enqueue each sample's
    normalized feature with its predicted class, into the positive queue when
    the prediction matches the label and the negative queue otherwise.

    Samples whose embedding has zero norm (fully dead ReLU output) have no
    direction to store and are not enqueued. `n_classes` restricts argmax to
    the first n_classes outputs, which keeps an abstention logit out of the
    class predictions."""
    record = forward(enc.params_m, batch)
    norms = np.linalg.norm(record.embedding, axis=1)
    alive = norms > 0.0
    z = record.embedding / np.where(alive, norms, 1.0)[:, None]
    probs = record.probs if n_classes is None else record.probs[:, :n_classes]
    preds = probs.argmax(axis=1)
    for i, label in enumerate(labels):
        if not alive[i]:
            continue
        if preds[i] == label:
            queues.p_queue.push(z[i], int(preds[i]))
        else:
            queues.n_queue.push(z[i], int(preds[i]))
