"""Command-line interface.

Subcommands:

* ``simulate``    write calibration/evaluation datasets as delimited text
* ``fit``         fit the classifier and rejection surfaces, write artifacts
* ``evaluate``    run the experiment and write the metrics report
* ``diagnose``    write PIT goodness-of-fit tables
* ``sweep-gamma`` write the gamma power-sweep table

Exit codes: 0 success, 2 configuration error, 3 numeric error. Every
subcommand is byte-reproducible under a fixed seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import genmodel, harness
from .errors import ConfigError, NumericError
from .harness import ExperimentConfig, Pipeline


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment configuration (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="naps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write datasets")
    _add_common(p)

    p = sub.add_parser("fit", help="fit classifier and rejection surfaces")
    _add_common(p)

    p = sub.add_parser("evaluate", help="run the experiment and write reports")
    _add_common(p)
    p.add_argument("--models", default=None, help="directory of fitted artifacts (skips refitting)")
    p.add_argument("--method", action="append", default=None, help="restrict to named methods (repeatable)")
    p.add_argument("--alpha", default=None, help="comma-separated miscoverage levels")
    p.add_argument("--gamma", default=None, help="gamma rule for NAPS methods: a number or 'alpha*<factor>'")
    p.add_argument("--dump-predictions", action="store_true", help="also write per-point prediction sets")

    p = sub.add_parser("diagnose", help="write PIT goodness-of-fit tables")
    _add_common(p)
    p.add_argument("--param-bins", type=int, default=2, help="nuisance bins per label in the PIT table")

    p = sub.add_parser("sweep-gamma", help="write the gamma power-sweep table")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma-grid", default="1e-4:1e-2:30", help="log grid lo:hi:count")

    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json_file(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if getattr(args, "alpha", None) is not None and args.command == "evaluate":
        updates["alphas"] = tuple(float(a) for a in str(args.alpha).split(","))
    if getattr(args, "method", None):
        keep = set(args.method)
        methods = tuple(m for m in config.methods if m.name in keep)
        missing = keep - {m.name for m in methods}
        if missing:
            raise ConfigError(f"unknown method names: {sorted(missing)}")
        updates["methods"] = methods
    if getattr(args, "gamma", None) is not None:
        rule = _parse_gamma_rule(args.gamma)
        updates["methods"] = tuple(
            dataclasses.replace(m, gamma_rule=rule) if m.kind == "naps" else m
            for m in updates.get("methods", config.methods)
        )
    if updates:
        config = dataclasses.replace(config, **updates)
    if config.output_dir is None:
        raise ConfigError("no output directory: set output_dir in the config or pass --out")
    return config


def _parse_gamma_rule(text: str) -> harness.GammaRule:
    text = text.strip()
    if text.startswith("alpha*"):
        return harness.GammaRule(kind="alpha-multiple", value=float(text[len("alpha*") :]))
    return harness.GammaRule(kind="fixed", value=float(text))


def _write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def cmd_simulate(config: ExperimentConfig) -> None:
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    calibration = genmodel.sample_dataset(
        config.generative("train"), config.n_calibration, config.seed, stream_base=harness.STREAM_CALIBRATION
    )
    evaluation = genmodel.sample_dataset(
        config.generative("target"), config.n_evaluation, config.seed, stream_base=harness.STREAM_EVALUATION
    )
    calibration.save(os.path.join(out, "calibration.csv"))
    evaluation.save(os.path.join(out, "evaluation.csv"))
    if config.classifier == "histogram":
        train = genmodel.sample_dataset(
            config.generative("train"), config.n_train, config.seed, stream_base=harness.STREAM_TRAIN
        )
        train.save(os.path.join(out, "train.csv"))


def cmd_fit(config: ExperimentConfig) -> None:
    pipeline = harness.fit_pipeline(config)
    pipeline.save(config.output_dir)


def cmd_evaluate(config: ExperimentConfig, models: str | None, dump_predictions: bool) -> None:
    pipeline = Pipeline.load(models) if models else None
    report = harness.run_experiment(config, pipeline=pipeline)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    report.to_json(os.path.join(out, "report.json"))
    report.write_long_table(os.path.join(out, "report_long.csv"))
    if dump_predictions:
        _dump_predictions(config, pipeline, out)


def _dump_predictions(config: ExperimentConfig, pipeline: Pipeline | None, out: str) -> None:
    from .prediction_sets import NapsSetClassifier
    from .nuisance import FullSpaceProvider

    if pipeline is None:
        pipeline = harness.fit_pipeline(config)
    evaluation = genmodel.sample_dataset(
        config.generative("target"), config.n_evaluation, config.seed, stream_base=harness.STREAM_EVALUATION
    )
    provider = FullSpaceProvider(space=config.train_prior.support)
    clf = NapsSetClassifier(model=pipeline.model, surfaces=pipeline.surfaces, providers={0: provider, 1: provider})
    batch = clf.predict_batch(evaluation.x, alpha=config.alphas[0], gamma=0.0)
    batch.save(os.path.join(out, "naps_predictions.csv"))


def cmd_diagnose(config: ExperimentConfig, param_bins: int) -> None:
    result = harness.run_pit_diagnostics(config, n_param_bins=param_bins)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    _write_json(result, os.path.join(out, "pit.json"))
    with open(os.path.join(out, "pit_bins.csv"), "w", encoding="utf-8") as fh:
        fh.write("surface,bin,n,ks_distance,ks_band,within_band,skipped\n")
        for name in ("nuisance_aware", "nuisance_ignoring"):
            for row in result[name]:
                fh.write(
                    f"{name},{row['bin']},{row['n']},{row['ks_distance']},"
                    f"{row['ks_band']},{row['within_band']},{row['skipped']}\n"
                )


def cmd_sweep_gamma(config: ExperimentConfig, alpha: float, grid_spec: str) -> None:
    try:
        lo, hi, count = grid_spec.split(":")
        grid = np.geomspace(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise ConfigError(f"malformed --gamma-grid {grid_spec!r}: expected lo:hi:count") from exc
    result = harness.gamma_sweep(config, alpha, grid)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    _write_json(result, os.path.join(out, "gamma_sweep.json"))
    with open(os.path.join(out, "gamma_sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("gamma,x0_star,x1_star,arg_nu,power_y1,power_y0\n")
        for row in result["rows"]:
            if row["skipped"]:
                continue  # skipped entries are warned about and kept in the JSON
            fh.write(
                f"{row['gamma']!r},{row['x0_star']!r},{row['x1_star']!r},"
                f"{row['arg_nu']!r},{row['power_y1']!r},{row['power_y0']!r}\n"
            )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help; pass that through
        return int(exc.code or 0)
    try:
        config = _load_config(args)
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "fit":
            cmd_fit(config)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.models, args.dump_predictions)
        elif args.command == "diagnose":
            cmd_diagnose(config, args.param_bins)
        elif args.command == "sweep-gamma":
            cmd_sweep_gamma(config, args.alpha, args.gamma_grid)
        else:  # unreachable; argparse enforces the choices
            parser.print_usage(sys.stderr)
            return 2
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
