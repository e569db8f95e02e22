"""End-to-end training pipeline orchestrator.

This module wires together existing modules to execute one training run.
It does NOT contain optimization math; it only coordinates and reports.

Pipeline Order:
1) Load or generate observations
2) Fit and apply normalization
3) Seeded train/test split
4) Train with the configured optimizer
5) Evaluate on the held-out split

Failures never raise out of run_training_pipeline: the result carries
valid=False, a reason, and an error_kind ("usage", "divergence", "io").
"""

import logging
from typing import Any

import numpy as np

from lambda_opt.control.pid_controller import PidStateTable
from lambda_opt.data.data_io import DatasetSpec, denormalize_values, load_dataset, normalize, split
from lambda_opt.errors import DataLoadError, DivergenceError, UsageError
from lambda_opt.evaluation.metrics import evaluate
from lambda_opt.training.optimizers import OPTIMIZER_LAMBDA_OPT
from lambda_opt.training.trainers import (
    EpochCallback,
    TrainConfig,
    check_convergence,
    memory_accounting,
    train_baseline,
    train_lambda_opt,
)

_logger = logging.getLogger(__name__)

ERROR_USAGE = "usage"
ERROR_DIVERGENCE = "divergence"
ERROR_IO = "io"


def prepare_dataset(spec: DatasetSpec) -> dict[str, Any]:
    """Load, normalize and split the data described by spec.

    Returns:
        Dictionary with exactly these keys:
        - raw: ObservedMatrix in source units
        - truth: np.ndarray | None - noiseless matrix for synthetic data
        - params: NormalizationParams
        - train / test: normalized splits
        - raw_train / raw_test: the same positions in source units
    """
    raw, truth = load_dataset(spec)
    normalized, params = normalize(raw, spec.normalization)
    train, test = split(normalized, spec.split_ratio, spec.split_seed)
    raw_train, raw_test = split(raw, spec.split_ratio, spec.split_seed)
    return {
        "raw": raw,
        "truth": truth,
        "params": params,
        "train": train,
        "test": test,
        "raw_train": raw_train,
        "raw_test": raw_test,
    }


def run_training_pipeline(
    dataset_spec: DatasetSpec | None,
    config: TrainConfig,
    on_epoch: EpochCallback | None = None,
    prepared: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """Execute one training run.

    Args:
        dataset_spec: Data source; ignored when `prepared` is given.
        config: Training hyperparameters.
        on_epoch: Receives every EpochReport as it is produced.
        prepared: Output of prepare_dataset, to share one split across runs.

    Returns:
        Dictionary with exactly these keys:
        - valid: bool - True if training and evaluation completed
        - reason: str - Human-readable explanation
        - error_kind: str | None - "usage", "divergence" or "io" on failure
        - optimizer: str
        - seed: int
        - factors: FactorPair | None
        - reports: list[EpochReport]
        - eval: EvalResult | None - final held-out accuracy
        - epochs_run: int
        - converged: bool
        - wall_time_ms: int - summed training-pass time
        - memory: dict | None - output of memory_accounting
        - prepared: dict | None - output of prepare_dataset
    """
    result: dict[str, Any] = {
        "valid": False,
        "reason": "",
        "error_kind": None,
        "optimizer": config.optimizer,
        "seed": config.seed,
        "factors": None,
        "reports": [],
        "eval": None,
        "epochs_run": 0,
        "converged": False,
        "wall_time_ms": 0,
        "memory": None,
        "prepared": prepared,
    }

    try:
        if prepared is None:
            prepared = prepare_dataset(dataset_spec)
            result["prepared"] = prepared

        train, test = prepared["train"], prepared["test"]

        if config.optimizer == OPTIMIZER_LAMBDA_OPT:
            table = PidStateTable()
            factors, reports = train_lambda_opt(train, test, config, on_epoch, state_table=table)
        else:
            table = None
            factors, reports = train_baseline(train, test, config, on_epoch)

        final = evaluate(test, factors)

        result["factors"] = factors
        result["reports"] = reports
        result["eval"] = final
        result["epochs_run"] = len(reports)
        result["converged"] = check_convergence(reports, config.convergence_eps, config.patience)
        result["wall_time_ms"] = sum(r.wall_time_ms for r in reports)
        result["memory"] = memory_accounting(factors, table)
        result["valid"] = True
        result["reason"] = (
            f"{config.optimizer}: {len(reports)} epochs, "
            f"rmse={final.rmse:.6f}, mae={final.mae:.6f}, converged={result['converged']}."
        )
        return result

    except DivergenceError as exc:
        result["error_kind"] = ERROR_DIVERGENCE
        result["reason"] = str(exc)
        return result
    except UsageError as exc:
        result["error_kind"] = ERROR_USAGE
        result["reason"] = str(exc)
        return result
    except (DataLoadError, OSError) as exc:
        result["error_kind"] = ERROR_IO
        result["reason"] = str(exc)
        return result
    except Exception as exc:
        _logger.exception("Unexpected error in training pipeline")
        result["error_kind"] = ERROR_USAGE
        result["reason"] = f"Unexpected error in training pipeline: {exc}"
        return result


def truth_rmse(prepared: dict[str, Any], factors: Any) -> float | None:
    """RMSE of U V^T against the noiseless truth over every cell, in source units."""
    truth = prepared.get("truth")
    if truth is None:
        return None
    estimate = denormalize_values(factors.U @ factors.V.T, prepared["params"])
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))


if __name__ == "__main__":
    from lambda_opt.config.settings import build_dataset_spec, build_train_config, resolve_settings

    settings = resolve_settings(
        cli={"synth": "m=100,n=50,rank=3,density=0.3,noise=0.01", "epochs": 60, "rank": 3},
        config_file=None,
        preset="ukdale",
    )
    outcome = run_training_pipeline(build_dataset_spec(settings), build_train_config(settings))
    print(f"valid: {outcome['valid']}")
    print(f"reason: {outcome['reason']}")
    print(f"memory: {outcome['memory']}")
