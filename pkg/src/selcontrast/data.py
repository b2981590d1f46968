"""Datasets: synthetic Gaussian mixtures, IDX image files, and labeled CSV
files, plus content fingerprinting for run records."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class LabeledData:
    x: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class DataSplit:
    train: LabeledData
    test: LabeledData


@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from. `source` is one of `gaussians`, `idx`,
    `csv`; the remaining fields apply per source (see README)."""

    source: str = "gaussians"
    n_classes: int = 8
    dim: int = 32
    per_class: int = 625
    radius: float = 5.0
    std: float = 1.0
    seed: int = 0
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    csv: str | None = None
    csv_train: str | None = None
    csv_test: str | None = None
    label_column: str = "label"
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.source not in ("gaussians", "idx", "csv"):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.source == "gaussians":
            if self.n_classes < 2:
                raise ConfigError("need at least 2 classes")
            if self.dim < 1 or self.per_class < 2:
                raise ConfigError("dim must be >= 1 and per_class >= 2")
            if self.std <= 0.0 or self.radius <= 0.0:
                raise ConfigError("std and radius must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")


def gaussian_mixture(spec: DatasetSpec) -> DataSplit:
    """Isotropic Gaussian clusters around class means placed on a sphere of
    the given radius, split per class into train/test by a seeded
    permutation."""
    rng = np.random.default_rng(spec.seed)
    directions = rng.standard_normal((spec.n_classes, spec.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = spec.radius * directions
    x_train, y_train, x_test, y_test = [], [], [], []
    n_train = int(spec.per_class * spec.train_fraction)
    for c in range(spec.n_classes):
        samples = means[c] + spec.std * rng.standard_normal(
            (spec.per_class, spec.dim))
        perm = rng.permutation(spec.per_class)
        x_train.append(samples[perm[:n_train]])
        x_test.append(samples[perm[n_train:]])
        y_train.append(np.full(n_train, c, dtype=np.int64))
        y_test.append(np.full(spec.per_class - n_train, c, dtype=np.int64))
    return DataSplit(
        train=LabeledData(np.concatenate(x_train), np.concatenate(y_train)),
        test=LabeledData(np.concatenate(x_test), np.concatenate(y_test)),
    )


def nearest_mean_accuracy(split: DataSplit, spec: DatasetSpec) -> float:
    """Accuracy of classifying test samples by the nearest generating class
    mean; a generation-time sanity oracle for synthetic data."""
    rng = np.random.default_rng(spec.seed)
    directions = rng.standard_normal((spec.n_classes, spec.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = spec.radius * directions
    d2 = ((split.test.x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float((d2.argmin(axis=1) == split.test.y).mean())


def _read_exact(fh, count: int, path: str, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(
            f"{path}: truncated at byte offset {offset + len(data)}")
    return data


def load_idx(images_path: str, labels_path: str) -> LabeledData:
    """Parse a big-endian IDX image/label file pair. Pixels are scaled to
    [0, 1]; images are flattened to rows*cols features."""
    with open(images_path, "rb") as fh:
        header = _read_exact(fh, 16, images_path, 0)
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(
                f"{images_path}: bad image magic 0x{magic:08x} at byte "
                f"offset 0")
        pixels = _read_exact(fh, n * rows * cols, images_path, 16)
    with open(labels_path, "rb") as fh:
        header = _read_exact(fh, 8, labels_path, 0)
        magic, n_labels = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(
                f"{labels_path}: bad label magic 0x{magic:08x} at byte "
                f"offset 0")
        raw_labels = _read_exact(fh, n_labels, labels_path, 8)
    if n != n_labels:
        raise FormatError(
            f"count mismatch: {n} images vs {n_labels} labels")
    x = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    return LabeledData(
        x=x.reshape(n, rows * cols),
        y=np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64),
    )


def load_csv(path: str, label_column: str = "label") -> LabeledData:
    """Load a labeled CSV with a header row; every non-label column is a
    float feature."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise FormatError(f"{path}: empty file")
        columns = header.split(",")
        if label_column not in columns:
            raise FormatError(
                f"{path}: no column named {label_column!r} in header")
        label_idx = columns.index(label_column)
        xs, ys = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(columns):
                raise FormatError(
                    f"{path}:{lineno}: expected {len(columns)} fields, "
                    f"got {len(parts)}")
            try:
                ys.append(int(parts[label_idx]))
                xs.append([float(v) for i, v in enumerate(parts)
                           if i != label_idx])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not xs:
        raise FormatError(f"{path}: no data rows")
    return LabeledData(x=np.array(xs, dtype=np.float64),
                       y=np.array(ys, dtype=np.int64))


def save_csv(path: str, data: LabeledData, label_column: str = "label") -> None:
    """Write a LabeledData as CSV with full-precision feature values."""
    d = data.x.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([f"f{i}" for i in range(d)] + [label_column]) + "\n")
        for row, label in zip(data.x, data.y):
            fh.write(",".join(repr(float(v)) for v in row)
                     + f",{int(label)}\n")


def split_data(data: LabeledData, train_fraction: float,
               seed: int) -> DataSplit:
    """Seeded-permutation split of a single pool into train/test."""
    n = len(data)
    n_train = int(n * train_fraction)
    if n_train < 1 or n_train >= n:
        raise ConfigError(
            f"train_fraction {train_fraction} leaves an empty split for "
            f"{n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    return DataSplit(train=LabeledData(data.x[tr], data.y[tr]),
                     test=LabeledData(data.x[te], data.y[te]))


def build_dataset(spec: DatasetSpec) -> DataSplit:
    """Materialize the dataset a spec describes."""
    if spec.source == "gaussians":
        return gaussian_mixture(spec)
    if spec.source == "idx":
        if not spec.images or not spec.labels:
            raise ConfigError("idx source needs `images` and `labels` paths")
        pool = load_idx(spec.images, spec.labels)
        if spec.test_images and spec.test_labels:
            return DataSplit(train=pool,
                             test=load_idx(spec.test_images,
                                           spec.test_labels))
        return split_data(pool, spec.train_fraction, spec.seed)
    if spec.csv_train and spec.csv_test:
        return DataSplit(train=load_csv(spec.csv_train, spec.label_column),
                         test=load_csv(spec.csv_test, spec.label_column))
    if not spec.csv:
        raise ConfigError("csv source needs `csv` or `csv_train`+`csv_test`")
    return split_data(load_csv(spec.csv, spec.label_column),
                      spec.train_fraction, spec.seed)


def fingerprint(split: DataSplit) -> str:
    """SHA-256 over shapes and raw bytes of both splits; changes iff any
    sample or label changes."""
    h = hashlib.sha256()
    for part in (split.train, split.test):
        h.update(repr(part.x.shape).encode())
        h.update(np.ascontiguousarray(part.x).tobytes())
        h.update(np.ascontiguousarray(part.y).tobytes())
    return h.hexdigest()
