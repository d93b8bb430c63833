"""Command-line runner: ``costep run | predict | list``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import FlowTrace, predict_leading, predict_regrouped
from .core import ConfigurationError, fmt
from .experiments import BUILTINS, builtin_config, load_config, run_experiment

log = logging.getLogger("costep")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def output_dir(explicit: str | None, name: str, configured: str | None = None) -> Path:
    if explicit:
        return Path(explicit)
    if configured:
        return Path(configured)
    return Path(os.environ.get("COSTEP_OUT", "out")) / name


def write_summary(path: Path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in summary.items():
            text = fmt(value) if isinstance(value, float) else str(value)
            fh.write(f"{key}: {text}\n")


def cmd_run(target: str, out: str | None = None) -> int:
    try:
        if target in BUILTINS:
            cfg = builtin_config(target)
        elif Path(target).is_file():
            cfg = load_config(target)
        else:
            print(f"error: {target!r} is neither a builtin experiment nor a config file", file=sys.stderr)
            return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_experiment(cfg)
    except ConfigurationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure inside a unit or controller
        print(f"error: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    dest = output_dir(out, cfg.name, cfg.output_dir)
    dest.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(dest / "trace.csv")
    result.discrepancy.to_csv(dest / "discrepancy.csv")
    write_summary(dest / "summary.txt", result.summary)
    for key, value in result.summary.items():
        print(f"{key}: {fmt(value) if isinstance(value, float) else value}")
    print(f"wrote {dest}")
    return EXIT_OK


def read_flow_csv(path: str | Path, t_column: str = "t", q_column: str = "q") -> FlowTrace:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError("empty CSV") from None
        if t_column not in header or q_column not in header:
            raise ValueError(f"CSV needs columns {t_column!r} and {q_column!r}; found {header}")
        it, iq = header.index(t_column), header.index(q_column)
        t, q = [], []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                t.append(float(row[it]))
                q.append(float(row[iq]))
            except (ValueError, IndexError):
                raise ValueError(f"line {lineno}: malformed row {row}") from None
    if not t:
        raise ValueError("CSV has no data rows")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q))):
        raise ValueError("CSV contains non-finite values")
    return FlowTrace(t, q)


def cmd_predict(flow_csv: str, out: str | None = None, t_column: str = "t", q_column: str = "q") -> int:
    try:
        flow = read_flow_csv(flow_csv, t_column, q_column)
    except (OSError, ValueError) as exc:
        print(f"error: {flow_csv}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    leading = predict_leading(flow)
    regrouped = predict_regrouped(flow)
    dest = output_dir(out, "predict")
    dest.mkdir(parents=True, exist_ok=True)
    with open(dest / "predicted.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "predicted_leading", "predicted_regrouped"])
        for row in zip(flow.t, leading, regrouped):
            w.writerow([fmt(float(v)) for v in row])
    print(f"samples: {len(flow.t)}")
    print(f"final_leading: {fmt(float(leading[-1]))}")
    print(f"final_regrouped: {fmt(float(regrouped[-1]))}")
    print(f"wrote {dest / 'predicted.csv'}")
    return EXIT_OK


def cmd_list() -> int:
    width = max(map(len, BUILTINS))
    for name, (description, _) in BUILTINS.items():
        print(f"{name:<{width}}  {description}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="costep",
        description="Co-simulation runs and integral-state discrepancy analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a builtin experiment or a config file")
    p_run.add_argument("target", help="builtin name (see 'list') or path to a config file")
    p_run.add_argument("--out", help="output directory (default: $COSTEP_OUT/<name> or out/<name>)")
    p_pred = sub.add_parser("predict", help="predict the discrepancy from a flow CSV")
    p_pred.add_argument("flow_csv")
    p_pred.add_argument("--out", help="output directory (default: $COSTEP_OUT/predict or out/predict)")
    p_pred.add_argument("--t-column", default="t")
    p_pred.add_argument("--q-column", default="q")
    sub.add_parser("list", help="list builtin experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "run":
        return cmd_run(args.target, args.out)
    if args.command == "predict":
        return cmd_predict(args.flow_csv, args.out, args.t_column, args.q_column)
    return cmd_list()


if __name__ == "__main__":
    sys.exit(main())
