"""Command-line entry point: run scenarios, recompute metrics, compare runs."""

from __future__ import annotations

import argparse
import csv
import logging
import pathlib
import sys

from .config import ConfigError, load_config, resolved_lines
from .metrics import (
    MetricsLog,
    comparison_csv_rows,
    compare_runs,
    map_quality,
    post_transient_mean,
)
from .svgplot import line_plot

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coexplore",
        description="Deterministic multi-robot exploration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write artifacts")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--policy", choices=("ours", "mexp", "dcm"), default=None)
    run.add_argument("--out", required=True)
    run.add_argument("--verbose", action="store_true")

    met = sub.add_parser("metrics", help="recompute and print a run's summary")
    met.add_argument("--run", required=True)

    cmp_ = sub.add_parser("compare", help="paired per-seed comparison of run sets")
    cmp_.add_argument("--runs", nargs="+", required=True, help="run-set directories (first is the baseline)")
    cmp_.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="validate a config and echo the resolved values")
    val.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.policy is not None:
            cfg.policy = args.policy
        cfg.validate()
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .sim import run_scenario

    try:
        log = run_scenario(cfg, out_dir=args.out)
    except Exception as exc:  # noqa: BLE001 - boundary of the CLI
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"run complete: {log.summary.get('ticks_run', 0)} ticks -> {args.out}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    from .world_model import load_pgm

    run_dir = pathlib.Path(args.run)
    try:
        log = MetricsLog.load(run_dir)
        merged = load_pgm(run_dir / "maps" / "merged_final.pgm")
        truth = load_pgm(run_dir / "maps" / "truth.pgm")
    except (OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    quality = map_quality(merged, truth)
    print(f"ticks = {len(log.rows)}")
    if log.rows:
        print(f"final_coverage_merged = {log.column('coverage_merged')[-1]:.3f}")
        print(f"mean_iou_post_transient = {post_transient_mean(log, 'iou_total'):.4f}")
        print(f"reloc_total = {log.column('reloc_total')[-1]:.0f}")
    for key in sorted(quality):
        print(f"quality_{key} = {quality[key]:.6f}")
    return EXIT_OK


def _load_run_set(path: pathlib.Path) -> list[MetricsLog]:
    if (path / "metrics.csv").exists():
        return [MetricsLog.load(path)]
    logs = []
    for sub in sorted(p for p in path.iterdir() if p.is_dir()):
        if (sub / "metrics.csv").exists():
            logs.append(MetricsLog.load(sub))
    if not logs:
        raise ValueError(f"no runs found under {path}")
    return logs


def _cmd_compare(args) -> int:
    try:
        sets = []
        labels = []
        for raw in args.runs:
            path = pathlib.Path(raw)
            sets.append(_load_run_set(path))
            labels.append(path.name)
        report = compare_runs(sets, labels)
    except (OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as f:
        csv.writer(f).writerows(comparison_csv_rows(report))

    series = []
    for label, logs in zip(labels, sets):
        log = logs[0]
        series.append((label, log.column("tick"), log.column("coverage_merged")))
    line_plot(out / "coverage_compare.svg", series, "Merged coverage by policy", "tick", "%")
    for label, deltas in report.deltas.items():
        mean_cov = sum(d.coverage_delta for d in deltas) / len(deltas)
        print(f"{label} vs {report.baseline_label}: mean final-coverage delta {mean_cov:+.3f}")
    print(f"comparison written to {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        cfg.validate()
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in resolved_lines(cfg):
        print(line)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "metrics": _cmd_metrics,
        "compare": _cmd_compare,
        "validate": _cmd_validate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
