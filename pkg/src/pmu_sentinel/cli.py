"""Command line entry point: ``pmu-sentinel <subcommand> --config run.json --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .exceptions import PmuSentinelError


def _error_line(stage, exc):
    payload = {"error": type(exc).__name__, "stage": stage, "message": str(exc)}
    path = getattr(exc, "path", None)
    if path:
        payload["path"] = str(path)
    return json.dumps(payload, sort_keys=True)


def _cfg(args):
    return pipeline.load_config(args.config, args.seed)


def cmd_synth(args):
    print(pipeline.stage_synth(_cfg(args), args.out))


def cmd_ingest(args):
    print(pipeline.stage_ingest(_cfg(args), args.out))


def cmd_preprocess(args):
    meta = pipeline.stage_preprocess(_cfg(args), args.out, args.dataset)
    print(json.dumps({"length": meta["length"], "split_index": meta["split_index"], "filter": meta["filter"]}))


def cmd_inject(args):
    mask = pipeline.stage_inject(_cfg(args), args.out)
    print(json.dumps({"episodes": [list(e) for e in mask.episodes]}))


def cmd_train(args):
    _, history = pipeline.stage_train(_cfg(args), args.out)
    last = history[-1]
    print(json.dumps({"epochs": len(history), "train_mse": last.train_mse, "val_mse": last.val_mse}))


def cmd_detect(args):
    result = pipeline.stage_detect(_cfg(args), args.out)
    print(json.dumps({"threshold": result.threshold, "flagged": int(result.flags.sum())}))


def cmd_eval(args):
    rep = pipeline.stage_eval(_cfg(args), args.out)
    print(json.dumps({"model": rep.model, "precision": rep.precision, "recall": rep.recall, "f1": rep.f1}))


def cmd_run_all(args):
    reports = pipeline.run_all(_cfg(args), args.out, threads=args.threads)
    for rep in reports:
        print(",".join(rep.table_row()))


def cmd_export_plots(args):
    run_dir = args.run_dir or args.out
    for path in pipeline.export_plots(run_dir):
        print(path)


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic PMU dataset"),
    "ingest": (cmd_ingest, "validate and import a PMU CSV file"),
    "preprocess": (cmd_preprocess, "select channel, unwrap, filter, split"),
    "inject": (cmd_inject, "add Gaussian bursts to the test part"),
    "train": (cmd_train, "train the configured forecaster"),
    "detect": (cmd_detect, "score residuals and apply the calibrated threshold"),
    "eval": (cmd_eval, "precision / recall / F1 against the injected mask"),
    "run-all": (cmd_run_all, "every stage for each model x filtration cell"),
    "export-plots": (cmd_export_plots, "write plot-ready CSVs for a run directory"),
}
ALIASES = {"run-all": ["run_all"], "export-plots": ["export_plots"]}
NO_CONFIG = {"export-plots"}


def build_parser():
    parser = argparse.ArgumentParser(prog="pmu-sentinel", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, aliases=ALIASES.get(name, []))
        p.set_defaults(func=fn, stage=name)
        p.add_argument("--config", required=name not in NO_CONFIG, help="run configuration JSON (or a manifest)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=".", help="run directory")
        if name == "preprocess":
            p.add_argument("--dataset", default=None, help="dataset CSV (default: OUT/dataset.csv)")
        if name == "run-all":
            p.add_argument("--threads", type=int, default=None,
                           help="parallel matrix cells (default: $PMU_SENTINEL_THREADS or 1)")
        if name == "export-plots":
            p.add_argument("run_dir", nargs="?", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        args.func(args)
    except (PmuSentinelError, ValueError, OSError, KeyError) as exc:
        print(_error_line(getattr(exc, "stage", args.stage), exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
