"""Command-line entry point: lambda-opt {train, evaluate, benchmark, synth}.

stdout carries only machine-readable output (one JSON record, or the
benchmark table aligned and then as CSV). Progress and diagnostics go to stderr through logging.

Exit codes:
- 0 success
- 1 usage or configuration error
- 2 training diverged
- 3 I/O or data-file error
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from lambda_opt import __version__
from lambda_opt.config.settings import (
    PRESETS,
    SETTING_TYPES,
    build_dataset_spec,
    build_train_config,
    load_config_file,
    resolve_settings,
    validate_train_settings,
)
from lambda_opt.control.pid_controller import ERROR_MODES
from lambda_opt.data.data_io import (
    NORMALIZATION_MODES,
    NormalizationParams,
    apply_normalization,
    default_header_path,
    generate_synthetic,
    load_delimited,
    parse_synthetic_string,
    write_triples,
)
from lambda_opt.errors import DataLoadError, UsageError
from lambda_opt.evaluation.benchmark import (
    BENCHMARK_FILENAME,
    DEFAULT_BENCHMARK_OPTIMIZERS,
    all_rows_failed,
    benchmark_table,
    render_delimited,
    render_table,
    run_benchmark,
    summarize_benchmark,
    write_table,
)
from lambda_opt.evaluation.metrics import evaluate, evaluate_denormalized
from lambda_opt.journal.epoch_journal import (
    RUN_JOURNAL_FILENAME,
    EpochReportWriter,
    journal_entry_from_result,
    log_run,
    utc_timestamp,
)
from lambda_opt.journal.run_manifest import MANIFEST_FILENAME, RunManifest, read_manifest, write_manifest
from lambda_opt.model.core_model import FactorPair, check_compatible
from lambda_opt.run_experiment import (
    ERROR_DIVERGENCE,
    ERROR_IO,
    ERROR_USAGE,
    prepare_dataset,
    run_training_pipeline,
    truth_rmse,
)
from lambda_opt.training.optimizers import ALL_OPTIMIZERS
from lambda_opt.training.trainers import EpochReport

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3
EXIT_BY_ERROR_KIND = {
    ERROR_USAGE: EXIT_USAGE,
    ERROR_DIVERGENCE: EXIT_DIVERGENCE,
    ERROR_IO: EXIT_IO,
}

FACTORS_FILENAME = "factors.npz"
TRAIN_SPLIT_FILENAME = "train_split.csv"
TEST_SPLIT_FILENAME = "test_split.csv"
SYNTH_OBSERVED_FILENAME = "observed.csv"
SYNTH_TRUTH_FILENAME = "truth.npy"
SYNTH_MANIFEST_FILENAME = "synth_manifest.json"
SYNTH_MANIFEST_KIND = "lambda-opt-synth"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; 2 means divergence here."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    package_logger = logging.getLogger("lambda_opt")
    for handler in list(package_logger.handlers):
        if getattr(handler, "_lambda_opt_cli", False):
            package_logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._lambda_opt_cli = True
    package_logger.addHandler(handler)
    package_logger.setLevel(level)


def _emit(record: dict[str, Any]) -> None:
    print(json.dumps(record, sort_keys=True))


# ---------------------------------------------------------------------------
# Settings from flags
# ---------------------------------------------------------------------------


def _cli_settings(args: argparse.Namespace) -> dict[str, Any]:
    return {key: getattr(args, key, None) for key in SETTING_TYPES if key != "preset"}


def _resolve(args: argparse.Namespace) -> dict[str, Any]:
    config_file = load_config_file(args.config) if args.config else None
    return resolve_settings(_cli_settings(args), config_file, args.preset)


def _dataset_label(settings: dict[str, Any]) -> str:
    return settings.get("data") or f"synth:{settings.get('synth')}"


def _parse_seeds(text: str | None) -> list[int] | None:
    if not text:
        return None
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}.") from exc
    if not seeds or any(seed < 0 for seed in seeds):
        raise UsageError(f"--seeds expects non-negative integers, got {text!r}.")
    return seeds


def _parse_optimizers(text: str | None) -> list[str]:
    if not text:
        return list(DEFAULT_BENCHMARK_OPTIMIZERS)
    names = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [name for name in names if name not in ALL_OPTIMIZERS]
    if unknown or not names:
        raise UsageError(f"Unknown optimizers {unknown}; expected names from {ALL_OPTIMIZERS}.")
    return names


def _parse_lambda_overrides(items: list[str] | None) -> dict[str, float]:
    overrides: dict[str, float] = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or name.strip() not in ALL_OPTIMIZERS:
            raise UsageError(f"--lambda-for expects OPTIMIZER=VALUE, got {item!r}.")
        try:
            overrides[name.strip()] = float(value)
        except ValueError as exc:
            raise UsageError(f"--lambda-for value must be a number, got {item!r}.") from exc
    return overrides


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _progress(report: EpochReport) -> None:
    _logger.info(
        "epoch=%d train_rmse=%.6f valid_rmse=%.6f valid_mae=%.6f mean_lambda=%.6g ms=%d",
        report.epoch,
        report.train_rmse,
        report.valid_rmse,
        report.valid_mae,
        report.mean_lambda,
        report.wall_time_ms,
    )


def _save_run_artifacts(
    out_dir: Path,
    settings: dict[str, Any],
    result: dict[str, Any],
    writer: EpochReportWriter,
    started_at: str,
) -> RunManifest:
    factors = result["factors"]
    prepared = result["prepared"]
    np.savez(out_dir / FACTORS_FILENAME, U=factors.U, V=factors.V)
    write_triples(out_dir / TRAIN_SPLIT_FILENAME, prepared["raw_train"])
    write_triples(out_dir / TEST_SPLIT_FILENAME, prepared["raw_test"])

    manifest = RunManifest(
        settings=settings,
        seed=int(settings["seed"]),
        started_at=started_at,
        finished_at=utc_timestamp(),
        report_path=writer.report_path.name,
        timings_path=writer.timings_path.name,
        final_eval=result["eval"].as_record(),
        normalization=prepared["params"].as_record(),
        dataset=build_dataset_spec(settings).as_record(),
        train_config=build_train_config(settings).as_record(),
        memory=result["memory"],
        epochs_run=result["epochs_run"],
        converged=result["converged"],
        artifacts={
            "factors": FACTORS_FILENAME,
            "train_split": TRAIN_SPLIT_FILENAME,
            "test_split": TEST_SPLIT_FILENAME,
        },
    )
    write_manifest(out_dir / MANIFEST_FILENAME, manifest)
    return manifest


def cmd_train(args: argparse.Namespace) -> int:
    """Train one model and write factors, report files and a manifest to --out."""
    try:
        if args.manifest:
            settings = dict(read_manifest(args.manifest).settings)
            _logger.info("Replaying settings from %s", args.manifest)
        else:
            settings = _resolve(args)
    except UsageError as exc:
        _logger.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        _logger.error("Cannot read configuration: %s", exc)
        return EXIT_IO

    check = validate_train_settings(settings)
    if not check["ok"]:
        _logger.error("Invalid settings: %s", check["reason"])
        return EXIT_USAGE

    try:
        config = build_train_config(settings)
        dataset_spec = build_dataset_spec(settings)
    except UsageError as exc:
        _logger.error("%s", exc)
        return EXIT_USAGE

    out_dir = Path(args.out)
    try:
        writer = EpochReportWriter(out_dir)
    except OSError as exc:
        _logger.error("Cannot create report files in %s: %s", out_dir, exc)
        return EXIT_IO

    def on_epoch(report: EpochReport) -> None:
        writer.append(report)
        _progress(report)

    started_at = utc_timestamp()
    result = run_training_pipeline(dataset_spec, config, on_epoch)
    log_run(
        out_dir / RUN_JOURNAL_FILENAME,
        journal_entry_from_result("train", result, _dataset_label(settings), out_dir),
    )

    if not result["valid"]:
        _logger.error("Training failed: %s", result["reason"])
        return EXIT_BY_ERROR_KIND.get(result["error_kind"], EXIT_USAGE)

    try:
        _save_run_artifacts(out_dir, settings, result, writer, started_at)
    except OSError as exc:
        _logger.error("Cannot write run artifacts to %s: %s", out_dir, exc)
        return EXIT_IO

    _logger.info("%s", result["reason"])
    record = result["eval"].as_record()
    truth_error = truth_rmse(result["prepared"], result["factors"])
    if truth_error is not None:
        record["truth_rmse"] = truth_error
    record.update(
        {
            "optimizer": config.optimizer,
            "seed": config.seed,
            "epochs": result["epochs_run"],
            "converged": result["converged"],
            "out": str(out_dir),
        }
    )
    _emit(record)
    return EXIT_OK


def _load_factors(path: Path) -> FactorPair:
    if path.is_dir():
        path = path / FACTORS_FILENAME
    archive = np.load(path)
    if not isinstance(archive, np.lib.npyio.NpzFile):
        raise DataLoadError(f"{path} is not an .npz archive with arrays U and V.")
    with archive:
        if "U" not in archive.files or "V" not in archive.files:
            raise DataLoadError(f"{path} must contain arrays U and V.")
        return FactorPair(U=archive["U"].copy(), V=archive["V"].copy())


def _manifest_path_for(args: argparse.Namespace) -> Path | None:
    if args.manifest:
        return Path(args.manifest)
    factors_path = Path(args.factors)
    candidate = (factors_path if factors_path.is_dir() else factors_path.parent) / MANIFEST_FILENAME
    return candidate if candidate.exists() else None


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score saved factors on a triple file, in the space they were trained in."""
    try:
        factors = _load_factors(Path(args.factors))

        rows, cols = args.rows, args.cols
        has_header = bool(args.header) or default_header_path(args.data).exists()
        if not has_header and rows is None and cols is None:
            rows, cols = factors.m, factors.n
            _logger.info("No header for %s; using factor dimensions %dx%d", args.data, rows, cols)
        data = load_delimited(args.data, m=rows, n=cols, delimiter=args.delimiter, header_path=args.header)
        check_compatible(data, factors)

        params = NormalizationParams(mode="none")
        manifest_path = _manifest_path_for(args)
        if manifest_path is not None:
            manifest = read_manifest(manifest_path)
            if manifest.normalization:
                params = NormalizationParams(**manifest.normalization)
        else:
            _logger.warning("No manifest found; evaluating without normalization")

        normalized = apply_normalization(data, params)
        record: dict[str, Any] = evaluate(normalized, factors).as_record()
        if args.denormalized:
            record["denormalized"] = evaluate_denormalized(normalized, factors, params).as_record()

    except UsageError as exc:
        _logger.error("%s", exc)
        return EXIT_USAGE
    except (DataLoadError, OSError, ValueError) as exc:
        _logger.error("Cannot load evaluation inputs: %s", exc)
        return EXIT_IO

    _emit(record)
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    """Run several optimizers on one dataset and print the comparison table."""
    try:
        settings = _resolve(args)
        optimizers = _parse_optimizers(args.optimizers)
        seeds = _parse_seeds(args.seeds)
        overrides = _parse_lambda_overrides(args.lambda_for)
        if args.jobs < 1:
            raise UsageError(f"--jobs must be >= 1, got {args.jobs}.")
        dataset_spec = build_dataset_spec(settings)
    except UsageError as exc:
        _logger.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        _logger.error("Cannot read configuration: %s", exc)
        return EXIT_IO

    try:
        prepared = prepare_dataset(dataset_spec)
    except UsageError as exc:
        _logger.error("%s", exc)
        return EXIT_USAGE
    except (DataLoadError, OSError) as exc:
        _logger.error("Cannot load data: %s", exc)
        return EXIT_IO

    rows = run_benchmark(prepared, settings, optimizers, seeds, overrides, args.jobs)
    table = benchmark_table(rows)
    print(render_table(table))
    print()
    print(render_delimited(table), end="")

    summary = summarize_benchmark(rows)
    if summary["valid"]:
        _logger.info("%s", summary["reason"])

    if args.out:
        out_dir = Path(args.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_table(table, out_dir / BENCHMARK_FILENAME)
        except OSError as exc:
            _logger.error("Cannot write %s: %s", out_dir / BENCHMARK_FILENAME, exc)
            return EXIT_IO
        for row in rows:
            log_run(
                out_dir / RUN_JOURNAL_FILENAME,
                {
                    "command": "benchmark",
                    "optimizer": row["optimizer"],
                    "seed": row["seed"],
                    "dataset": _dataset_label(settings),
                    "status": "ok" if row["valid"] else (row["error_kind"] or "error"),
                    "epochs": row["epochs"],
                    "converged": row["converged"],
                    "rmse": row["rmse"],
                    "mae": row["mae"],
                    "wall_time_ms": row["wall_time_ms"],
                    "reason": row["reason"],
                    "out_dir": str(out_dir),
                },
            )

    if all_rows_failed(rows):
        kinds = {row["error_kind"] for row in rows}
        _logger.error("Every benchmark row failed")
        if kinds == {ERROR_DIVERGENCE}:
            return EXIT_DIVERGENCE
        if kinds == {ERROR_IO}:
            return EXIT_IO
        return EXIT_USAGE
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a planted low-rank dataset: observed triples, truth matrix, manifest."""
    try:
        spec = parse_synthetic_string(args.synth, default_seed=args.seed or 0)
    except UsageError as exc:
        _logger.error("%s", exc)
        return EXIT_USAGE

    observed, truth = generate_synthetic(spec)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_triples(out_dir / SYNTH_OBSERVED_FILENAME, observed)
        np.save(out_dir / SYNTH_TRUTH_FILENAME, truth)
        manifest = {
            "kind": SYNTH_MANIFEST_KIND,
            "version": __version__,
            "spec": asdict(spec),
            "observed_count": len(observed),
            "files": {
                "observed": SYNTH_OBSERVED_FILENAME,
                "truth": SYNTH_TRUTH_FILENAME,
            },
        }
        with open(out_dir / SYNTH_MANIFEST_FILENAME, mode="w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        _logger.error("Cannot write synthetic dataset to %s: %s", out_dir, exc)
        return EXIT_IO

    _emit({"observed_count": len(observed), "m": spec.m, "n": spec.n, "out": str(out_dir)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_data_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("--data", help="Triple file (row,col,value per line).")
    group.add_argument("--header", help="JSON sidecar with m, n, delimiter.")
    group.add_argument("--rows", type=int, help="Declared m; overrides the header.")
    group.add_argument("--cols", type=int, help="Declared n; overrides the header.")
    group.add_argument("--delimiter", help="Field delimiter (default ',').")
    group.add_argument("--synth", help="Planted dataset, e.g. m=100,n=50,rank=3,density=0.3,noise=0.01.")
    group.add_argument("--normalize", choices=NORMALIZATION_MODES)
    group.add_argument("--split", type=float, help="Train fraction in (0, 1).")
    group.add_argument("--split-seed", dest="split_seed", type=int)


def _add_training_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--preset", choices=sorted(PRESETS))
    group.add_argument("--config", help="Settings file (.json or KEY=VALUE).")
    group.add_argument("--rank", type=int, help="Latent dimension k.")
    group.add_argument("--eta", type=float, help="Learning rate.")
    group.add_argument("--lambda", dest="lambda", type=float, help="Fixed lambda for baselines.")
    group.add_argument("--kp", type=float)
    group.add_argument("--ki", type=float)
    group.add_argument("--kd", type=float)
    group.add_argument("--lambda-min", dest="lambda_min", type=float)
    group.add_argument("--lambda-max", dest="lambda_max", type=float, help="Default: 2 * lambda.")
    group.add_argument("--error-mode", dest="error_mode", choices=ERROR_MODES)
    group.add_argument("--momentum", type=float)
    group.add_argument("--beta1", type=float)
    group.add_argument("--beta2", type=float)
    group.add_argument("--adam-eps", dest="adam_eps", type=float)
    group.add_argument("--epochs", type=int, help="Maximum epochs.")
    group.add_argument("--eps", type=float, help="Convergence threshold on valid_rmse improvement.")
    group.add_argument("--patience", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--no-shuffle", dest="shuffle", action="store_const", const=False, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="lambda-opt", description="PID-regularized low-rank factorization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train one model.")
    _add_data_arguments(train)
    _add_training_arguments(train)
    train.add_argument("--optimizer", choices=ALL_OPTIMIZERS)
    train.add_argument("--manifest", help="Re-run with the settings of a saved manifest.")
    train.add_argument("--out", required=True, help="Run directory.")
    train.set_defaults(handler=cmd_train)

    evaluate_cmd = commands.add_parser("evaluate", help="Score saved factors on a triple file.")
    evaluate_cmd.add_argument("--factors", required=True, help="factors.npz or a run directory.")
    evaluate_cmd.add_argument("--data", required=True)
    evaluate_cmd.add_argument("--header")
    evaluate_cmd.add_argument("--rows", type=int)
    evaluate_cmd.add_argument("--cols", type=int)
    evaluate_cmd.add_argument("--delimiter")
    evaluate_cmd.add_argument("--manifest", help="Default: manifest.json next to the factors.")
    evaluate_cmd.add_argument("--denormalized", action="store_true", help="Also report source-unit metrics.")
    evaluate_cmd.set_defaults(handler=cmd_evaluate)

    bench = commands.add_parser("benchmark", help="Compare optimizers on one dataset.")
    _add_data_arguments(bench)
    _add_training_arguments(bench)
    bench.add_argument("--optimizers", help="Comma-separated; default lambda_opt,momentum,nesterov,adam,nadam.")
    bench.add_argument("--seeds", help="Comma-separated training seeds.")
    bench.add_argument("--lambda-for", dest="lambda_for", action="append", metavar="OPTIMIZER=VALUE")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", help="Directory for benchmark.csv and the run journal.")
    bench.set_defaults(handler=cmd_benchmark)

    synth = commands.add_parser("synth", help="Write a planted low-rank dataset.")
    synth.add_argument("--synth", required=True, help="m=..,n=..,rank=..,density=..[,noise=..][,seed=..]")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
