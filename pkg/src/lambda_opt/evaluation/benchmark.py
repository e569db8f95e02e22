"""Comparison harness: lambda-opt against the fixed-lambda baselines.

This module runs several optimizers on ONE prepared dataset (same data,
same split, same training seed per row) and tabulates their accuracy and
convergence speed. It does NOT change how any optimizer trains.

Rules:
- Rows are ordered optimizer-major in request order, then by seed
- A failed row is reported with valid=False and its reason; other rows still run
- Parallel runs (jobs > 1) produce the same rows in the same order as jobs=1
"""

import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import pandas as pd

from lambda_opt.config.settings import build_train_config
from lambda_opt.errors import LambdaOptError
from lambda_opt.run_experiment import ERROR_USAGE, run_training_pipeline
from lambda_opt.training.optimizers import (
    OPTIMIZER_ADAM,
    OPTIMIZER_LAMBDA_OPT,
    OPTIMIZER_MOMENTUM,
    OPTIMIZER_NADAM,
    OPTIMIZER_NESTEROV,
)
from lambda_opt.training.trainers import TrainConfig

_logger = logging.getLogger(__name__)

DEFAULT_BENCHMARK_OPTIMIZERS = (
    OPTIMIZER_LAMBDA_OPT,
    OPTIMIZER_MOMENTUM,
    OPTIMIZER_NESTEROV,
    OPTIMIZER_ADAM,
    OPTIMIZER_NADAM,
)
ACCURACY_TOLERANCE = 0.005
TABLE_COLUMNS = ["optimizer", "seed", "rmse", "mae", "epochs", "converged", "wall_time_ms", "status"]
BENCHMARK_FILENAME = "benchmark.csv"


def _failed_row(optimizer: str, seed: int, reason: str, error_kind: str | None) -> dict[str, Any]:
    return {
        "optimizer": optimizer,
        "seed": seed,
        "valid": False,
        "reason": reason,
        "error_kind": error_kind,
        "rmse": None,
        "mae": None,
        "epochs": None,
        "converged": False,
        "wall_time_ms": None,
    }


def _row_from_result(result: dict[str, Any]) -> dict[str, Any]:
    if not result["valid"]:
        return _failed_row(result["optimizer"], result["seed"], result["reason"], result["error_kind"])
    final = result["eval"]
    return {
        "optimizer": result["optimizer"],
        "seed": result["seed"],
        "valid": True,
        "reason": result["reason"],
        "error_kind": None,
        "rmse": final.rmse,
        "mae": final.mae,
        "epochs": result["epochs_run"],
        "converged": result["converged"],
        "wall_time_ms": result["wall_time_ms"],
    }


def run_benchmark_row(splits: dict[str, Any], config: TrainConfig) -> dict[str, Any]:
    """Train one optimizer on the shared split and reduce the result to a table row."""
    result = run_training_pipeline(None, config, prepared=splits)
    row = _row_from_result(result)
    _logger.info(
        "benchmark %s seed=%d: %s",
        config.optimizer,
        config.seed,
        row["reason"],
    )
    return row


def plan_benchmark(
    settings: dict[str, Any],
    optimizers: list[str] | tuple[str, ...],
    seeds: list[int],
    lambda_overrides: dict[str, float] | None = None,
) -> list[tuple[str, int, TrainConfig | None, str]]:
    """One (optimizer, seed, config or None, failure reason) entry per table row."""
    lambda_overrides = lambda_overrides or {}
    plan: list[tuple[str, int, TrainConfig | None, str]] = []
    for optimizer in optimizers:
        for seed in seeds:
            row_settings = dict(settings)
            row_settings["seed"] = seed
            if optimizer in lambda_overrides:
                row_settings["lambda"] = lambda_overrides[optimizer]
            try:
                plan.append((optimizer, seed, build_train_config(row_settings, optimizer), ""))
            except LambdaOptError as exc:
                plan.append((optimizer, seed, None, str(exc)))
    return plan


def run_benchmark(
    prepared: dict[str, Any],
    settings: dict[str, Any],
    optimizers: list[str] | tuple[str, ...] = DEFAULT_BENCHMARK_OPTIMIZERS,
    seeds: list[int] | None = None,
    lambda_overrides: dict[str, float] | None = None,
    jobs: int = 1,
) -> list[dict[str, Any]]:
    """Run every optimizer (for every seed) on the same prepared split.

    Args:
        prepared: Output of run_experiment.prepare_dataset.
        settings: Resolved settings shared by all rows.
        optimizers: Optimizer names, in table order.
        seeds: Training seeds; defaults to [settings["seed"]].
        lambda_overrides: Per-optimizer fixed lambda.
        jobs: Worker processes; 1 runs in-process.

    Returns:
        List of row dictionaries, each with exactly these keys:
        optimizer, seed, valid, reason, error_kind, rmse, mae, epochs,
        converged, wall_time_ms
    """
    seeds = list(seeds) if seeds else [int(settings["seed"])]
    splits = {"train": prepared["train"], "test": prepared["test"]}
    plan = plan_benchmark(settings, optimizers, seeds, lambda_overrides)

    rows: list[dict[str, Any] | None] = [None] * len(plan)
    runnable = []
    for index, (optimizer, seed, config, reason) in enumerate(plan):
        if config is None:
            rows[index] = _failed_row(optimizer, seed, reason, ERROR_USAGE)
        else:
            runnable.append((index, config))

    if jobs > 1 and len(runnable) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(index, pool.submit(run_benchmark_row, splits, config)) for index, config in runnable]
            for index, future in futures:
                optimizer, seed = plan[index][0], plan[index][1]
                try:
                    rows[index] = future.result()
                except Exception as exc:
                    _logger.error("benchmark worker for %s seed=%d failed: %s", optimizer, seed, exc)
                    rows[index] = _failed_row(optimizer, seed, f"Worker failed: {exc}", ERROR_USAGE)
    else:
        for index, config in runnable:
            rows[index] = run_benchmark_row(splits, config)

    return rows


def all_rows_failed(rows: list[dict[str, Any]]) -> bool:
    return bool(rows) and not any(row["valid"] for row in rows)


def benchmark_table(rows: list[dict[str, Any]]) -> pd.DataFrame:
    """Comparison table: one row per (optimizer, seed)."""
    records = []
    for row in rows:
        records.append(
            {
                "optimizer": row["optimizer"],
                "seed": row["seed"],
                "rmse": row["rmse"],
                "mae": row["mae"],
                "epochs": row["epochs"],
                "converged": row["converged"],
                "wall_time_ms": row["wall_time_ms"],
                "status": "ok" if row["valid"] else f"failed: {row['reason']}",
            }
        )
    table = pd.DataFrame.from_records(records, columns=TABLE_COLUMNS)
    return table.astype({"epochs": "Int64", "wall_time_ms": "Int64"})


def render_table(table: pd.DataFrame) -> str:
    return table.to_string(index=False, float_format=lambda value: f"{value:.6f}", na_rep="-")


def render_delimited(table: pd.DataFrame) -> str:
    return table.to_csv(index=False)


def write_table(table: pd.DataFrame, path: str | Path) -> None:
    table.to_csv(path, index=False)


def summarize_benchmark(
    rows: list[dict[str, Any]],
    tolerance: float = ACCURACY_TOLERANCE,
) -> dict[str, Any]:
    """Per seed: is lambda-opt as accurate as the best baseline, and as fast as the median one?

    accuracy_ok: lambda_opt rmse <= best baseline rmse + tolerance
    speed_ok:    lambda_opt epochs <= median baseline epochs

    Returns:
        Dictionary with exactly these keys:
        - valid: bool - False when no seed had both lambda_opt and a baseline
        - reason: str
        - per_seed: list[dict]
        - accuracy_majority: bool
        - speed_majority: bool
    """
    summary: dict[str, Any] = {
        "valid": False,
        "reason": "",
        "per_seed": [],
        "accuracy_majority": False,
        "speed_majority": False,
    }

    try:
        seeds = sorted({row["seed"] for row in rows})
        for seed in seeds:
            seed_rows = [row for row in rows if row["seed"] == seed and row["valid"]]
            ours = [row for row in seed_rows if row["optimizer"] == OPTIMIZER_LAMBDA_OPT]
            baselines = [row for row in seed_rows if row["optimizer"] != OPTIMIZER_LAMBDA_OPT]
            if not ours or not baselines:
                continue
            best_rmse = min(row["rmse"] for row in baselines)
            median_epochs = statistics.median(row["epochs"] for row in baselines)
            summary["per_seed"].append(
                {
                    "seed": seed,
                    "lambda_opt_rmse": ours[0]["rmse"],
                    "best_baseline_rmse": best_rmse,
                    "accuracy_ok": ours[0]["rmse"] <= best_rmse + tolerance,
                    "lambda_opt_epochs": ours[0]["epochs"],
                    "median_baseline_epochs": median_epochs,
                    "speed_ok": ours[0]["epochs"] <= median_epochs,
                }
            )

        compared = summary["per_seed"]
        if not compared:
            summary["reason"] = "No seed had both a lambda_opt row and a baseline row"
            return summary

        accurate = sum(1 for entry in compared if entry["accuracy_ok"])
        fast = sum(1 for entry in compared if entry["speed_ok"])
        summary["accuracy_majority"] = accurate * 2 > len(compared)
        summary["speed_majority"] = fast * 2 > len(compared)
        summary["valid"] = True
        summary["reason"] = (
            f"{len(compared)} seeds compared: accuracy ok in {accurate}, speed ok in {fast}"
        )
        return summary

    except Exception as exc:
        summary["reason"] = f"Unexpected error summarizing benchmark: {exc}"
        return summary


if __name__ == "__main__":
    from lambda_opt.config.settings import build_dataset_spec, resolve_settings
    from lambda_opt.run_experiment import prepare_dataset

    settings = resolve_settings(
        cli={"synth": "m=60,n=30,rank=3,density=0.4,noise=0.01,seed=3", "rank": 3, "epochs": 80},
        preset="ukdale",
    )
    prepared = prepare_dataset(build_dataset_spec(settings))
    rows = run_benchmark(prepared, settings, seeds=[1, 2])
    print("=" * 70)
    print(render_table(benchmark_table(rows)))
    print("=" * 70)
    print(summarize_benchmark(rows)["reason"])
