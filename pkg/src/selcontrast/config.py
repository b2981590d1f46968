"""Flat key-value experiment configuration.

One `key = value` pair per line, `#` comments, unknown keys are errors. The
serialized snapshot written into a run directory parses back to an identical
configuration. Key reference lives in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .bound import BoundSettings
from .data import DatasetSpec
from .errors import ConfigError
from .losses import MarginParams
from .trainer import TrainConfig

DEFAULT_COVERAGES = (1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7,
                     0.6, 0.5, 0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    bound: BoundSettings = field(default_factory=BoundSettings)
    coverages: tuple[float, ...] = DEFAULT_COVERAGES
    out_dir: str = "runs"


def _parse_int(v: str) -> int:
    return int(v)


def _parse_float(v: str) -> float:
    return float(v)


def _parse_str(v: str) -> str:
    return v


def _parse_int_tuple(v: str) -> tuple[int, ...]:
    return tuple(int(p) for p in v.split(",") if p.strip())


def _parse_float_tuple(v: str) -> tuple[float, ...]:
    return tuple(float(p) for p in v.split(",") if p.strip())


def _parse_opt_int(v: str):
    return None if v == "none" else int(v)


def _parse_opt_str(v: str):
    return None if v == "none" else v


# key -> (section, field name, parser); sections: dataset/train/margins/
# bound/top
_KEYS = {
    # dataset
    "data": ("dataset", "source", _parse_str),
    "classes": ("dataset", "n_classes", _parse_int),
    "dim": ("dataset", "dim", _parse_int),
    "per_class": ("dataset", "per_class", _parse_int),
    "radius": ("dataset", "radius", _parse_float),
    "std": ("dataset", "std", _parse_float),
    "data_seed": ("dataset", "seed", _parse_int),
    "images": ("dataset", "images", _parse_opt_str),
    "labels": ("dataset", "labels", _parse_opt_str),
    "test_images": ("dataset", "test_images", _parse_opt_str),
    "test_labels": ("dataset", "test_labels", _parse_opt_str),
    "csv": ("dataset", "csv", _parse_opt_str),
    "csv_train": ("dataset", "csv_train", _parse_opt_str),
    "csv_test": ("dataset", "csv_test", _parse_opt_str),
    "label_column": ("dataset", "label_column", _parse_str),
    "train_fraction": ("dataset", "train_fraction", _parse_float),
    # training
    "hidden": ("train", "hidden", _parse_int_tuple),
    "epochs": ("train", "epochs", _parse_int),
    "batch_size": ("train", "batch_size", _parse_int),
    "warmup_epochs": ("train", "warmup_epochs", _parse_int),
    "contrast_weight": ("train", "contrast_weight", _parse_float),
    "momentum_coeff": ("train", "momentum_coeff", _parse_float),
    "queue_size": ("train", "queue_size", _parse_opt_int),
    "temperature": ("train", "temperature", _parse_float),
    "lr": ("train", "lr", _parse_float),
    "lr_decay": ("train", "lr_decay", _parse_float),
    "lr_decay_every": ("train", "lr_decay_every", _parse_int),
    "sgd_momentum": ("train", "sgd_momentum", _parse_float),
    "weight_decay": ("train", "weight_decay", _parse_float),
    "seed": ("train", "seed", _parse_int),
    "method": ("train", "method", _parse_str),
    "head": ("train", "head", _parse_str),
    "sat_momentum": ("train", "sat_momentum", _parse_float),
    "entropy_weight": ("train", "entropy_weight", _parse_float),
    "sat_warmup_epochs": ("train", "sat_warmup_epochs", _parse_opt_int),
    # bound evaluation
    "margin_rho": ("margins", "rho", _parse_float),
    "margin_rho_prime": ("margins", "rho_prime", _parse_float),
    "margin_alpha": ("margins", "alpha", _parse_float),
    "margin_beta": ("margins", "beta", _parse_float),
    "margin_lambda": ("margins", "lam", _parse_float),
    "delta": ("bound", "delta", _parse_float),
    "threshold": ("bound", "threshold", _parse_float),
    "penalty": ("bound", "penalty", _parse_float),
    # top level
    "coverages": ("top", "coverages", _parse_float_tuple),
    "out_dir": ("top", "out_dir", _parse_str),
}


def parse_config_text(text: str) -> ExperimentConfig:
    sections: dict[str, dict] = {"dataset": {}, "train": {}, "margins": {},
                                 "bound": {}, "top": {}}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        section, attr, parser = _KEYS[key]
        try:
            sections[section][attr] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
    bound_kwargs = sections["bound"]
    if sections["margins"]:
        bound_kwargs["margins"] = MarginParams(**sections["margins"])
    try:
        return ExperimentConfig(
            dataset=DatasetSpec(**sections["dataset"]),
            train=TrainConfig(**sections["train"]),
            bound=BoundSettings(**bound_kwargs),
            **sections["top"],
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_text(cfg: ExperimentConfig) -> str:
    """Serialize every key; parse_config_text(config_text(cfg)) == cfg."""
    objs = {"dataset": cfg.dataset, "train": cfg.train,
            "margins": cfg.bound.margins, "bound": cfg.bound,
            "top": cfg}
    lines = []
    for key, (section, attr, _) in _KEYS.items():
        lines.append(f"{key} = {_format_value(getattr(objs[section], attr))}")
    return "\n".join(lines) + "\n"


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Copy of the config with the training seed replaced."""
    return replace(cfg, train=replace(cfg.train, seed=seed))
