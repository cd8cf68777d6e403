"""
Command-line entry point: ``amdslab <command> --config run.yaml``.

Exit codes: 0 success, 2 configuration error, 3 data or manifest error, 4 gate failure. Errors
are reported as one JSON object on stderr.
"""

import argparse
import json
import logging
import os
import sys

from .config import load_config
from .evaluation import (
    EvaluationContext,
    build_test_suite,
    dimensionality_study,
    load_test_suite,
    run_ablations,
    run_adaptive_eval,
    run_evaluation,
    save_test_suite,
)
from .exceptions import AmdsError, ConfigError, GateError
from .output import atomic_target, render_report, write_table
from .pipeline import RunLayout, SystemManifest, build_system, infer_batch, load_run_split
from .reader import load_feature_rows

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GATE = 4

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None, help="master seed override")
    common.add_argument("--output", default=None, help="run directory override")
    common.add_argument("--jobs", type=int, default=None, help="parallel workers")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="amdslab", description="Attack-aware multi-signal defense for flow classifiers."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common], help="train the defended system")
    commands.add_parser("attack", parents=[common], help="generate attack batches on the test split")
    commands.add_parser("evaluate", parents=[common], help="write every report table")
    infer = commands.add_parser("infer", parents=[common], help="classify flows from a CSV file")
    infer.add_argument("--input", required=True, help="CSV file of raw flow rows")
    infer.add_argument("--manifest", default=None, help="manifest directory (default: run directory)")
    infer.add_argument("--out", default=None, help="JSON-lines output file (default: stdout)")
    commands.add_parser("ablate", parents=[common], help="ablation table")
    adaptive = commands.add_parser("adaptive", parents=[common], help="adaptive adversary table")
    adaptive.add_argument("--epsilon", type=float, default=None)
    scaling = commands.add_parser("scaling", parents=[common], help="dimensionality study")
    scaling.add_argument("--dims", type=int, nargs="+", default=None)
    scaling.add_argument("--epsilons", type=float, nargs="+", default=None)
    report = commands.add_parser("report", parents=[common], help="render report text and figures")
    report.add_argument("--no-figures", action="store_true")
    return parser


def _load_system(layout: RunLayout):
    manifest = SystemManifest.load(layout.manifest)
    return manifest, load_run_split(layout, "test", manifest)


def _context(config, layout: RunLayout) -> EvaluationContext:
    manifest, test_data = _load_system(layout)
    suite = load_test_suite(layout.attacks, list(config.attacks.kinds), manifest.scaler.schema)
    return EvaluationContext.build(config, manifest, test_data, suite)


def cmd_train(config, args) -> str:
    build_system(config)
    return RunLayout(config.output_dir).manifest


def cmd_attack(config, args) -> str:
    layout = RunLayout(config.output_dir)
    manifest, test_data = _load_system(layout)
    suite = build_test_suite(config, manifest, test_data)
    save_test_suite(suite, layout.attacks, manifest.scaler.schema)
    return layout.attacks


def cmd_evaluate(config, args) -> str:
    layout = RunLayout(config.output_dir)
    manifest, test_data = _load_system(layout)
    suite = load_test_suite(layout.attacks, list(config.attacks.kinds), manifest.scaler.schema)
    train_data = load_run_split(layout, "train", manifest)
    run_evaluation(config, manifest, test_data, suite, train_data, layout.reports)
    return layout.reports


def cmd_infer(config, args) -> str:
    layout = RunLayout(config.output_dir)
    manifest = SystemManifest.load(args.manifest or layout.manifest)
    features = load_feature_rows(args.input, manifest.scaler, config.dataset.label_column)
    result = infer_batch(features, manifest)
    lines = "".join(json.dumps(o.to_record(), sort_keys=True) + "\n" for o in result.outputs)
    logger.info("Inference instrumentation: %s", result.instrumentation)
    if args.out is None:
        sys.stdout.write(lines)
        return "stdout"
    with atomic_target(args.out) as temp_path:
        with open(temp_path, "w", encoding="utf-8") as handle:
            handle.write(lines)
    return args.out


def cmd_ablate(config, args) -> str:
    layout = RunLayout(config.output_dir)
    write_table(run_ablations(_context(config, layout)), layout.reports)
    return layout.reports


def cmd_adaptive(config, args) -> str:
    layout = RunLayout(config.output_dir)
    write_table(run_adaptive_eval(_context(config, layout), args.epsilon), layout.reports)
    return layout.reports


def cmd_scaling(config, args) -> str:
    layout = RunLayout(config.output_dir)
    dims = args.dims or config.evaluation.scaling_dims
    epsilons = args.epsilons or config.evaluation.scaling_epsilons
    write_table(dimensionality_study(dims, epsilons, config), layout.reports)
    return layout.reports


def cmd_report(config, args) -> str:
    layout = RunLayout(config.output_dir)
    render_report(layout.reports, figures=not args.no_figures)
    return layout.reports


COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
    "ablate": cmd_ablate,
    "adaptive": cmd_adaptive,
    "scaling": cmd_scaling,
    "report": cmd_report,
}


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv: list = None) -> int:
    """
    Run one command and return its exit code.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        config = load_config(
            args.config, {"seed": args.seed, "output_dir": args.output, "jobs": args.jobs}
        )
    except (ConfigError, FileNotFoundError) as exc:
        return _fail(exc, EXIT_CONFIG)
    try:
        logger.info("Running %s in %s", args.command, os.path.abspath(config.output_dir))
        target = COMMANDS[args.command](config, args)
        logger.info("%s finished: %s", args.command, target)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except GateError as exc:
        return _fail(exc, EXIT_GATE)
    except (AmdsError, OSError) as exc:
        return _fail(exc, EXIT_DATA)
    return EXIT_OK
