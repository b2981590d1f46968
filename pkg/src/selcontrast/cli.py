"""Command-line interface.

Subcommands: gen-data, train, curve, bound, compare. Exit code 0 on success;
on failure a single machine-parseable line `error:<category>: <message>` goes
to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .bound import bound_trace, effective_margin_scale, trace_inputs
from .config import load_config, with_seed
from .data import build_dataset, fingerprint, save_csv
from .errors import SelContrastError
from .evaluation import risk_coverage_curve, score_predictions
from .net import load_checkpoint
from .runs import (
    bound_csv_text,
    compare_runs,
    curve_csv_text,
    format_comparison,
    run_experiment,
)
from .trainer import EpochStats, TrainHistory


def _add_config_arg(parser):
    parser.add_argument("--config", required=True,
                        help="path to a key=value config file")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selcontrast",
        description="Selective classification with contrastive features")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="materialize a dataset as CSV files")
    _add_config_arg(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="run one training experiment")
    _add_config_arg(p)
    p.add_argument("--seed", type=int, default=None,
                   help="override the training seed")
    p.add_argument("--out-dir", default=None,
                   help="override the run directory root")

    p = sub.add_parser("curve",
                       help="re-evaluate a checkpoint at new coverages")
    _add_config_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--coverages", default=None,
                   help="comma-separated targets, overrides the config grid")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("bound",
                       help="recompute the bound from a checkpoint + dataset")
    _add_config_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("compare",
                       help="rank-sum comparison of two sets of runs")
    p.add_argument("--a", nargs="+", required=True,
                   help="run directories for method A (one per seed)")
    p.add_argument("--b", nargs="+", required=True,
                   help="run directories for method B (one per seed)")
    p.add_argument("--coverage", type=float, default=None)
    return parser


def _emit(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    split = build_dataset(cfg.dataset)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.csv")
    test_path = os.path.join(args.out, "test.csv")
    save_csv(train_path, split.train, cfg.dataset.label_column)
    save_csv(test_path, split.test, cfg.dataset.label_column)
    print(f"wrote {train_path} ({len(split.train)} rows) and "
          f"{test_path} ({len(split.test)} rows)")
    print(f"fingerprint {fingerprint(split)}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    record = run_experiment(cfg)
    print(f"run directory: {record.run_dir}")
    print(f"dataset fingerprint: {record.data_fingerprint}")
    print(f"duration: {record.duration_seconds:.2f}s")
    return 0


def _cmd_curve(args) -> int:
    cfg = load_config(args.config)
    params, meta = load_checkpoint(args.checkpoint)
    split = build_dataset(cfg.dataset)
    coverages = (tuple(float(c) for c in args.coverages.split(","))
                 if args.coverages else cfg.coverages)
    preds = score_predictions(params, split.test.x, split.test.y,
                              n_classes=meta["n_classes"])
    points = risk_coverage_curve(preds, list(coverages))
    _emit(curve_csv_text(points), args.out)
    return 0


def _cmd_bound(args) -> int:
    cfg = load_config(args.config)
    params, meta = load_checkpoint(args.checkpoint)
    split = build_dataset(cfg.dataset)
    row = trace_inputs(max(meta["epoch"], 0), params,
                       split.train.x, split.train.y,
                       split.test.x, split.test.y,
                       cfg.bound, meta["n_classes"])
    report = bound_trace([row], cfg.bound)[0]
    history = TrainHistory()
    history.epochs.append(EpochStats(
        epoch=row.epoch, head_loss=0.0, contrast_loss=0.0,
        train_accuracy=0.0, test_accuracy=0.0, var_intra=row.var_intra,
        classifier_norm=row.classifier_norm, empirical_mh=row.empirical_mh,
        bound=report.bound_value, train_l0=report.train_selective_loss,
        test_l0=report.test_selective_loss, gap=report.gap))
    _emit(bound_csv_text(history, effective_margin_scale(cfg.bound.margins)),
          args.out)
    return 0


def _cmd_compare(args) -> int:
    rows = compare_runs(list(args.a), list(args.b), coverage=args.coverage)
    print(format_comparison(rows))
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "curve": _cmd_curve,
    "bound": _cmd_bound,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SelContrastError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
