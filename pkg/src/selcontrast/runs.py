"""Experiment orchestration: run directories, CSV artifacts, run records,
and cross-seed method comparison.

Run directories are append-only; re-running a config creates a fresh
directory and never mutates an earlier one. All CSVs are re-parseable by the
readers in this module.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .bound import effective_margin_scale
from .config import ExperimentConfig, config_text, load_config, with_seed
from .data import DataSplit, build_dataset, fingerprint
from .errors import ConfigError
from .evaluation import (
    RiskCoveragePoint,
    rank_sum_test,
    risk_coverage_curve,
    score_predictions,
)
from .net import save_checkpoint
from .trainer import TrainHistory, train

HISTORY_COLUMNS = ("epoch", "head_loss", "contrast_loss", "train_accuracy",
                   "test_accuracy", "var_intra", "classifier_norm",
                   "empirical_mh", "bound")
BOUND_COLUMNS = ("epoch", "var_intra", "classifier_norm", "rho_tilde",
                 "empirical_mh", "bound", "train_l0", "test_l0", "gap")
CURVE_COLUMNS = ("target_coverage", "threshold", "realized_coverage",
                 "selective_risk_percent", "selected", "errors")


@dataclass
class RunRecord:
    run_dir: str
    config_path: str
    history_path: str
    curve_path: str
    bound_path: str
    checkpoint_path: str
    data_fingerprint: str
    duration_seconds: float
    seed: int


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def history_csv_text(history: TrainHistory) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for e in history.epochs:
        lines.append(",".join(_fmt(getattr(e, c)) for c in HISTORY_COLUMNS))
    return "\n".join(lines) + "\n"


def bound_csv_text(history: TrainHistory, rho_tilde: float) -> str:
    lines = [",".join(BOUND_COLUMNS)]
    for e in history.epochs:
        row = (e.epoch, e.var_intra, e.classifier_norm, rho_tilde,
               e.empirical_mh, e.bound, e.train_l0, e.test_l0, e.gap)
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def curve_csv_text(points: list[RiskCoveragePoint]) -> str:
    lines = [",".join(CURVE_COLUMNS)]
    for p in points:
        row = (repr(p.target_coverage), repr(p.threshold),
               repr(p.realized_coverage),
               f"{100.0 * p.selective_risk:.4f}",
               str(p.selected_count), str(p.error_count))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_history_csv(path, history: TrainHistory) -> None:
    _write_text(path, history_csv_text(history))


def write_bound_csv(path, history: TrainHistory, rho_tilde: float) -> None:
    _write_text(path, bound_csv_text(history, rho_tilde))


def write_curve_csv(path, points: list[RiskCoveragePoint]) -> None:
    _write_text(path, curve_csv_text(points))


def _read_csv(path, expected_columns) -> list[dict[str, float]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != tuple(expected_columns):
            raise ConfigError(
                f"{path}: unexpected columns {header}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append({c: float(v)
                         for c, v in zip(header, line.split(","))})
    return rows


def read_history_csv(path) -> list[dict[str, float]]:
    return _read_csv(path, HISTORY_COLUMNS)


def read_bound_csv(path) -> list[dict[str, float]]:
    return _read_csv(path, BOUND_COLUMNS)


def read_curve_csv(path) -> list[dict[str, float]]:
    return _read_csv(path, CURVE_COLUMNS)


def _new_run_dir(base: str, seed: int) -> str:
    os.makedirs(base, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    counter = 0
    while True:
        suffix = f"-{counter}" if counter else ""
        path = os.path.join(base, f"run-{stamp}-seed{seed}{suffix}")
        try:
            os.mkdir(path)
            return path
        except FileExistsError:
            counter += 1


def run_experiment(cfg: ExperimentConfig,
                   dataset: DataSplit | None = None) -> RunRecord:
    """Build the dataset, train, evaluate the risk-coverage curve on the test
    split, and persist every artifact into a fresh run directory."""
    started = time.monotonic()
    if dataset is None:
        dataset = build_dataset(cfg.dataset)
    n_classes = int(dataset.train.y.max()) + 1
    params, history = train(dataset.train.x, dataset.train.y,
                            dataset.test.x, dataset.test.y,
                            cfg.train, bound_settings=cfg.bound)
    preds = score_predictions(params, dataset.test.x, dataset.test.y,
                              n_classes=n_classes)
    points = risk_coverage_curve(preds, list(cfg.coverages))

    run_dir = _new_run_dir(cfg.out_dir, cfg.train.seed)
    paths = {name: os.path.join(run_dir, name) for name in
             ("config.txt", "history.csv", "curve.csv", "bound.csv",
              "model.npz", "run.json")}
    with open(paths["config.txt"], "w", encoding="utf-8") as fh:
        fh.write(config_text(cfg))
    write_history_csv(paths["history.csv"], history)
    write_bound_csv(paths["bound.csv"], history,
                    effective_margin_scale(cfg.bound.margins))
    write_curve_csv(paths["curve.csv"], points)
    save_checkpoint(paths["model.npz"], params, cfg.train.seed,
                    head=cfg.train.head, n_classes=n_classes,
                    epoch=cfg.train.epochs - 1)
    record = RunRecord(
        run_dir=run_dir,
        config_path=paths["config.txt"],
        history_path=paths["history.csv"],
        curve_path=paths["curve.csv"],
        bound_path=paths["bound.csv"],
        checkpoint_path=paths["model.npz"],
        data_fingerprint=fingerprint(dataset),
        duration_seconds=time.monotonic() - started,
        seed=cfg.train.seed,
    )
    with open(paths["run.json"], "w", encoding="utf-8") as fh:
        json.dump(asdict(record), fh, indent=2)
        fh.write("\n")
    return record


def run_config_file(path, seed: int | None = None) -> RunRecord:
    cfg = load_config(path)
    if seed is not None:
        cfg = with_seed(cfg, seed)
    return run_experiment(cfg)


@dataclass
class ComparisonRow:
    coverage: float
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    u_statistic: float
    p_value: float
    verdict: str  # better | tie | worse (for side A at level 0.05)


def _risks_by_coverage(run_dirs: list[str]) -> dict[float, list[float]]:
    out: dict[float, list[float]] = {}
    grid = None
    for run_dir in run_dirs:
        rows = read_curve_csv(os.path.join(run_dir, "curve.csv"))
        coverages = tuple(r["target_coverage"] for r in rows)
        if grid is None:
            grid = coverages
            out = {c: [] for c in coverages}
        elif coverages != grid:
            raise ConfigError(
                f"{run_dir}: coverage grid {coverages} does not match "
                f"{grid}")
        for r in rows:
            out[r["target_coverage"]].append(r["selective_risk_percent"])
    return out


def compare_runs(dirs_a: list[str], dirs_b: list[str],
                 coverage: float | None = None,
                 significance: float = 0.05) -> list[ComparisonRow]:
    """Per-coverage rank-sum comparison of selective risk between two sets of
    run directories (one entry per seed). Restrict to a single coverage by
    passing it explicitly.

    The verdict uses the one-sided view of the reported two-sided p (p/2
    against the level), so a fully separated 3-seed comparison still
    registers as significant."""
    if len(dirs_a) < 2 or len(dirs_b) < 2:
        raise ConfigError("comparison needs at least 2 runs per side")
    risks_a = _risks_by_coverage(dirs_a)
    risks_b = _risks_by_coverage(dirs_b)
    if set(risks_a) != set(risks_b):
        raise ConfigError("the two sides use different coverage grids")
    coverages = sorted(risks_a, reverse=True)
    if coverage is not None:
        matches = [c for c in coverages if abs(c - coverage) < 1e-9]
        if not matches:
            raise ConfigError(
                f"coverage {coverage} not in the shared grid {coverages}")
        coverages = matches
    rows = []
    for c in coverages:
        a, b = risks_a[c], risks_b[c]
        u, p = rank_sum_test(a, b)
        mean_a, mean_b = float(np.mean(a)), float(np.mean(b))
        if p / 2.0 < significance and mean_a != mean_b:
            verdict = "better" if mean_a < mean_b else "worse"
        else:
            verdict = "tie"
        rows.append(ComparisonRow(
            coverage=c, mean_a=mean_a, std_a=float(np.std(a)),
            mean_b=mean_b, std_b=float(np.std(b)),
            u_statistic=u, p_value=p, verdict=verdict))
    return rows


def format_comparison(rows: list[ComparisonRow]) -> str:
    """Human-readable table, risks in percent with two decimals."""
    lines = [f"{'coverage':>8}  {'A risk%':>14}  {'B risk%':>14}  "
             f"{'U':>6}  {'p':>8}  verdict"]
    for r in rows:
        lines.append(
            f"{r.coverage:>8.2f}  "
            f"{r.mean_a:>6.2f} ± {r.std_a:<5.2f}  "
            f"{r.mean_b:>6.2f} ± {r.std_b:<5.2f}  "
            f"{r.u_statistic:>6.1f}  {r.p_value:>8.4f}  {r.verdict}")
    return "\n".join(lines)
