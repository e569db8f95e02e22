"""Training loops for lambda-opt LF and the fixed-lambda baselines.

lambda-opt, per observed entry (i, j) and epoch t:
1) e_ij(t) = r_ij - <U_i, V_j>
2) lambda_ij(t) = clip(PID(e_ij), lambda_min, lambda_max)
3) gradients with lambda_ij(t), then a plain SGD step on U_i and V_j

Baselines run the same epoch loop and gradient with a constant lambda,
but update rows through their optimizer (sgd, momentum, nesterov, adam,
nadam).

Rules:
- One run owns its factors, PID table and optimizer buffers
- Identical (data, config) gives identical factors and metric values
- After each epoch one EpochReport is handed to the optional on_epoch callback
- A factor magnitude above DIVERGENCE_LIMIT (or non-finite) aborts the run
"""

import logging
import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np

from lambda_opt.control.pid_controller import PidGains, PidStateTable, pid_step
from lambda_opt.errors import DivergenceError, UsageError
from lambda_opt.evaluation.metrics import evaluate
from lambda_opt.model.core_model import FactorPair, ObservedMatrix, init_factors, row_dot
from lambda_opt.training.gradients import grad_sample, sgd_apply, sgd_row_step
from lambda_opt.training.optimizers import (
    ALL_OPTIMIZERS,
    BASELINE_OPTIMIZERS,
    OPTIMIZER_LAMBDA_OPT,
    make_optimizer,
)

__all__ = [
    "DIVERGENCE_LIMIT",
    "EpochReport",
    "TrainConfig",
    "check_convergence",
    "grad_sample",
    "memory_accounting",
    "sgd_apply",
    "train",
    "train_baseline",
    "train_lambda_opt",
]

_logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
DEFAULT_CONVERGENCE_EPS = 1e-5
DEFAULT_PATIENCE = 5
SHUFFLE_STREAM = 1

EpochCallback = Callable[["EpochReport"], None]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    eta: float
    rank: int
    max_epochs: int
    seed: int = 0
    optimizer: str = OPTIMIZER_LAMBDA_OPT
    fixed_lambda: float | None = None
    gains: PidGains | None = None
    shuffle: bool = True
    convergence_eps: float = DEFAULT_CONVERGENCE_EPS
    patience: int = DEFAULT_PATIENCE
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if not math.isfinite(self.eta) or self.eta <= 0:
            raise UsageError(f"eta must be > 0, got {self.eta}.")
        if self.rank < 1:
            raise UsageError(f"rank must be >= 1, got {self.rank}.")
        if self.max_epochs < 1:
            raise UsageError(f"max_epochs must be >= 1, got {self.max_epochs}.")
        if self.seed < 0:
            raise UsageError(f"seed must be >= 0, got {self.seed}.")
        if self.optimizer not in ALL_OPTIMIZERS:
            raise UsageError(f"optimizer must be one of {ALL_OPTIMIZERS}, got {self.optimizer!r}.")
        if self.optimizer == OPTIMIZER_LAMBDA_OPT and self.gains is None:
            raise UsageError("lambda_opt needs PID gains and lambda bounds.")
        if self.optimizer in BASELINE_OPTIMIZERS:
            if self.fixed_lambda is None:
                raise UsageError(f"{self.optimizer} needs a fixed lambda.")
            if not math.isfinite(self.fixed_lambda) or self.fixed_lambda < 0:
                raise UsageError(f"fixed_lambda must be >= 0, got {self.fixed_lambda}.")
        if self.convergence_eps <= 0:
            raise UsageError(f"convergence_eps must be > 0, got {self.convergence_eps}.")
        if self.patience < 1:
            raise UsageError(f"patience must be >= 1, got {self.patience}.")
        if not (0.0 <= self.momentum < 1.0):
            raise UsageError(f"momentum must be in [0, 1), got {self.momentum}.")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise UsageError("beta1 and beta2 must be in [0, 1).")
        if self.adam_eps <= 0:
            raise UsageError(f"adam_eps must be > 0, got {self.adam_eps}.")

    def as_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochReport:
    """Metrics at the end of one epoch."""

    epoch: int
    train_rmse: float
    valid_rmse: float
    valid_mae: float
    mean_lambda: float
    wall_time_ms: int = field(default=0, compare=False)


def check_convergence(reports: list[EpochReport], eps: float, patience: int) -> bool:
    """True once valid_rmse improved by less than eps for `patience` consecutive epochs."""
    if len(reports) < patience + 1:
        return False
    recent = reports[-(patience + 1):]
    return all(
        previous.valid_rmse - current.valid_rmse < eps
        for previous, current in zip(recent, recent[1:])
    )


def memory_accounting(factors: FactorPair, table: PidStateTable | None = None) -> dict[str, int]:
    """Stored values: (m + n) * k factor entries plus one PID record per observed entry."""
    return {
        "factor_values": factors.storage_size,
        "pid_records": table.allocations if table is not None else 0,
    }


def _rows_stable(u: np.ndarray, v: np.ndarray) -> bool:
    # NaN fails both comparisons
    return bool(np.abs(u).max() <= DIVERGENCE_LIMIT and np.abs(v).max() <= DIVERGENCE_LIMIT)


def _run_epochs(
    data_train: ObservedMatrix,
    data_valid: ObservedMatrix,
    config: TrainConfig,
    factors: FactorPair,
    step: Callable[[int, int, int, float], None],
    mean_lambda: Callable[[], float],
    on_epoch: EpochCallback | None,
) -> list[EpochReport]:
    """Shared epoch loop: visit order, divergence guard, reports, convergence."""
    # indices come from a validated ObservedMatrix of the same shape as the factors
    U = factors.U
    V = factors.V
    rows = data_train.rows.tolist()
    cols = data_train.cols.tolist()
    values = data_train.values.tolist()
    count = len(rows)
    rng = np.random.default_rng((config.seed, SHUFFLE_STREAM))
    fixed_order = list(range(count))

    reports: list[EpochReport] = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(count).tolist() if config.shuffle else fixed_order

        started = time.perf_counter()
        for position in order:
            i = rows[position]
            j = cols[position]
            step(position, i, j, values[position])
            if not _rows_stable(U[i], V[j]):
                _logger.error("Divergence at epoch %d, entry (%d, %d)", epoch, i, j)
                raise DivergenceError(epoch, (i, j), f"factor magnitude exceeded {DIVERGENCE_LIMIT:g}")
        elapsed_ms = int(round((time.perf_counter() - started) * 1000))

        train_eval = evaluate(data_train, factors)
        valid_eval = evaluate(data_valid, factors)
        report = EpochReport(
            epoch=epoch,
            train_rmse=train_eval.rmse,
            valid_rmse=valid_eval.rmse,
            valid_mae=valid_eval.mae,
            mean_lambda=mean_lambda(),
            wall_time_ms=elapsed_ms,
        )
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)

        if check_convergence(reports, config.convergence_eps, config.patience):
            _logger.info("Converged after %d epochs", epoch)
            break
    else:
        _logger.info("Stopped at max_epochs=%d without converging", config.max_epochs)

    return reports


def _check_data(data_train: ObservedMatrix, data_valid: ObservedMatrix) -> None:
    if data_train is None or len(data_train) == 0:
        raise UsageError("Training data must not be empty.")
    if data_valid is None or len(data_valid) == 0:
        raise UsageError("Validation data must not be empty.")
    if (data_train.m, data_train.n) != (data_valid.m, data_valid.n):
        raise UsageError(
            f"Train ({data_train.m}x{data_train.n}) and validation "
            f"({data_valid.m}x{data_valid.n}) dimensions differ."
        )


def train_lambda_opt(
    data_train: ObservedMatrix,
    data_valid: ObservedMatrix,
    config: TrainConfig,
    on_epoch: EpochCallback | None = None,
    state_table: PidStateTable | None = None,
) -> tuple[FactorPair, list[EpochReport]]:
    """Train with the per-entry PID-controlled regularization coefficient.

    Args:
        data_train: Observed entries visited by SGD.
        data_valid: Held-out entries for valid_rmse / valid_mae.
        config: Must have optimizer == "lambda_opt" and gains set.
        on_epoch: Receives every EpochReport as soon as it is produced.
        state_table: Optional table to (re)allocate, exposed for memory accounting.

    Returns:
        (trained factors, one EpochReport per epoch run)

    Raises:
        DivergenceError: a factor row became non-finite or exceeded the limit.
    """
    if config.optimizer != OPTIMIZER_LAMBDA_OPT:
        raise UsageError(f"train_lambda_opt needs optimizer lambda_opt, got {config.optimizer!r}.")
    _check_data(data_train, data_valid)

    gains = config.gains
    eta = config.eta
    factors = init_factors(data_train.m, data_train.n, config.rank, config.seed)
    table = state_table if state_table is not None else PidStateTable()
    table.allocate(len(data_train), gains)
    states = table.states
    U = factors.U
    V = factors.V

    def step(position: int, i: int, j: int, observed: float) -> None:
        u = U[i]
        v = V[j]
        e = observed - row_dot(u, v)
        lam = pid_step(gains, states[position], e)
        sgd_row_step(u, v, e, lam, eta)

    _logger.info(
        "Training lambda_opt: |omega|=%d k=%d eta=%g max_epochs=%d",
        len(data_train),
        config.rank,
        eta,
        config.max_epochs,
    )
    reports = _run_epochs(data_train, data_valid, config, factors, step, table.mean_lambda, on_epoch)
    return factors, reports


def train_baseline(
    data_train: ObservedMatrix,
    data_valid: ObservedMatrix,
    config: TrainConfig,
    on_epoch: EpochCallback | None = None,
) -> tuple[FactorPair, list[EpochReport]]:
    """Train with a constant lambda and the configured baseline optimizer.

    Same loop, visit order and gradient as train_lambda_opt; only the
    parameter update rule differs.
    """
    if config.optimizer not in BASELINE_OPTIMIZERS:
        raise UsageError(
            f"train_baseline needs one of {BASELINE_OPTIMIZERS}, got {config.optimizer!r}."
        )
    _check_data(data_train, data_valid)

    lam = float(config.fixed_lambda)
    factors = init_factors(data_train.m, data_train.n, config.rank, config.seed)
    optimizer = make_optimizer(
        config.optimizer,
        factors,
        config.eta,
        momentum=config.momentum,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )

    U = factors.U
    V = factors.V

    def step(position: int, i: int, j: int, observed: float) -> None:
        e = observed - row_dot(U[i], V[j])
        optimizer.apply(factors, i, j, observed, e, lam)

    _logger.info(
        "Training %s: |omega|=%d k=%d eta=%g lambda=%g max_epochs=%d",
        config.optimizer,
        len(data_train),
        config.rank,
        config.eta,
        lam,
        config.max_epochs,
    )
    reports = _run_epochs(data_train, data_valid, config, factors, step, lambda: lam, on_epoch)
    return factors, reports


def train(
    data_train: ObservedMatrix,
    data_valid: ObservedMatrix,
    config: TrainConfig,
    on_epoch: EpochCallback | None = None,
) -> tuple[FactorPair, list[EpochReport]]:
    """Dispatch to train_lambda_opt or train_baseline by config.optimizer."""
    if config.optimizer == OPTIMIZER_LAMBDA_OPT:
        return train_lambda_opt(data_train, data_valid, config, on_epoch)
    return train_baseline(data_train, data_valid, config, on_epoch)
