import numpy as np
import pytest

from lambda_opt.control.pid_controller import PidGains, PidStateTable
from lambda_opt.data.data_io import SyntheticSpec, generate_synthetic, normalize, split
from lambda_opt.errors import DivergenceError, UsageError
from lambda_opt.model.core_model import ObservedMatrix
from lambda_opt.training.trainers import (
    EpochReport,
    TrainConfig,
    check_convergence,
    memory_accounting,
    train,
    train_baseline,
    train_lambda_opt,
)


def _reports(valid: list[float]) -> list[EpochReport]:
    return [EpochReport(epoch, 0.0, value, 0.0, 0.0) for epoch, value in enumerate(valid, start=1)]


def _lambda_opt_config(gains: PidGains, **overrides) -> TrainConfig:
    values = {"eta": 0.05, "rank": 3, "max_epochs": 20, "seed": 3, "gains": gains}
    values.update(overrides)
    return TrainConfig(**values)


def test_degenerate_controller_equals_fixed_lambda_sgd_bitwise():
    observed, _ = generate_synthetic(SyntheticSpec(m=50, n=20, rank=3, density=0.4, seed=5))
    normalized, _ = normalize(observed, "minmax")
    data_train, data_valid = split(normalized, 0.8, seed=1)
    lam = 0.01
    common = {"eta": 0.05, "rank": 4, "max_epochs": 50, "seed": 9, "convergence_eps": 1e-12}

    pid = TrainConfig(gains=PidGains(kp=0.0, ki=0.0, kd=0.0, lambda_min=lam, lambda_max=lam), **common)
    fixed = TrainConfig(optimizer="sgd", fixed_lambda=lam, **common)

    factors_pid, reports_pid = train_lambda_opt(data_train, data_valid, pid)
    factors_sgd, reports_sgd = train_baseline(data_train, data_valid, fixed)

    assert np.array_equal(factors_pid.U, factors_sgd.U)
    assert np.array_equal(factors_pid.V, factors_sgd.V)
    assert [r.valid_rmse for r in reports_pid] == [r.valid_rmse for r in reports_sgd]
    assert all(r.mean_lambda == pytest.approx(lam) for r in reports_pid)


def test_training_is_deterministic(planted_small, ukdale_gains):
    config = _lambda_opt_config(ukdale_gains)
    first_factors, first_reports = train_lambda_opt(planted_small["train"], planted_small["test"], config)
    second_factors, second_reports = train_lambda_opt(planted_small["train"], planted_small["test"], config)
    assert np.array_equal(first_factors.U, second_factors.U)
    assert np.array_equal(first_factors.V, second_factors.V)
    assert first_reports == second_reports


def test_seed_changes_the_run(planted_small, ukdale_gains):
    a, _ = train_lambda_opt(planted_small["train"], planted_small["test"], _lambda_opt_config(ukdale_gains, seed=1))
    b, _ = train_lambda_opt(planted_small["train"], planted_small["test"], _lambda_opt_config(ukdale_gains, seed=2))
    assert not np.array_equal(a.U, b.U)


def test_fixed_order_runs_without_shuffle(planted_small, ukdale_gains):
    config = _lambda_opt_config(ukdale_gains, shuffle=False, max_epochs=5)
    factors, reports = train_lambda_opt(planted_small["train"], planted_small["test"], config)
    assert len(reports) == 5
    assert factors.is_finite()


def test_reports_are_sequential_and_streamed(planted_small, ukdale_gains):
    seen = []
    config = _lambda_opt_config(ukdale_gains, max_epochs=8)
    _, reports = train_lambda_opt(planted_small["train"], planted_small["test"], config, on_epoch=seen.append)
    assert seen == reports
    assert [r.epoch for r in reports] == list(range(1, len(reports) + 1))
    for report in reports:
        assert ukdale_gains.lambda_min <= report.mean_lambda <= ukdale_gains.lambda_max * (1 + 1e-12)
        assert report.valid_mae <= report.valid_rmse
        assert report.wall_time_ms >= 0


def test_training_reduces_error(planted_small, ukdale_gains):
    config = _lambda_opt_config(ukdale_gains, max_epochs=60, rank=2)
    _, reports = train_lambda_opt(planted_small["train"], planted_small["test"], config)
    assert reports[-1].train_rmse < reports[0].train_rmse
    assert reports[-1].valid_rmse < reports[0].valid_rmse


def test_single_entry_converges_monotonically():
    single = ObservedMatrix(m=1, n=1, rows=[0], cols=[0], values=[1.0])
    gains = PidGains(kp=0.5, ki=0.0, kd=0.0, lambda_min=0.0, lambda_max=0.01)
    config = TrainConfig(eta=0.05, rank=1, max_epochs=400, seed=0, gains=gains, convergence_eps=1e-9)
    _, reports = train_lambda_opt(single, single, config)

    errors = [r.valid_rmse for r in reports]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(errors, errors[1:]))
    assert errors[-1] < 1e-3


@pytest.mark.parametrize("name", ["sgd", "momentum", "nesterov", "adam", "nadam"])
def test_baselines_train_and_reduce_error(planted_small, name):
    eta = 0.01 if name in ("adam", "nadam") else 0.02
    config = TrainConfig(eta=eta, rank=2, max_epochs=30, seed=0, optimizer=name, fixed_lambda=1e-3)
    factors, reports = train(planted_small["train"], planted_small["test"], config)
    assert factors.is_finite()
    assert reports[-1].train_rmse < reports[0].train_rmse
    assert all(r.mean_lambda == 1e-3 for r in reports)


def test_divergence_is_detected():
    rows, cols = np.divmod(np.arange(25), 5)
    data = ObservedMatrix(m=5, n=5, rows=rows, cols=cols, values=np.full(25, 100.0))
    config = TrainConfig(eta=10.0, rank=2, max_epochs=5, optimizer="sgd", fixed_lambda=0.0)
    with pytest.raises(DivergenceError) as excinfo:
        train_baseline(data, data, config)
    assert excinfo.value.epoch == 1
    row, col = excinfo.value.entry
    assert 0 <= row < 5 and 0 <= col < 5


def test_memory_accounting_counts_records(planted_small, ukdale_gains):
    table = PidStateTable()
    config = _lambda_opt_config(ukdale_gains, max_epochs=2)
    factors, _ = train_lambda_opt(planted_small["train"], planted_small["test"], config, state_table=table)
    accounting = memory_accounting(factors, table)
    assert accounting["pid_records"] == len(planted_small["train"])
    assert accounting["factor_values"] == (30 + 20) * 3
    assert memory_accounting(factors)["pid_records"] == 0


def test_check_convergence_rule():
    assert check_convergence(_reports([1.0, 0.5, 0.5, 0.5]), eps=1e-3, patience=2)
    assert not check_convergence(_reports([1.0, 0.9, 0.8]), eps=1e-3, patience=2)
    assert not check_convergence(_reports([0.5, 0.5]), eps=1e-3, patience=2)
    # a worse epoch is not an improvement
    assert check_convergence(_reports([0.5, 0.6, 0.7]), eps=1e-3, patience=2)


def test_run_stops_once_converged():
    single = ObservedMatrix(m=1, n=1, rows=[0], cols=[0], values=[0.0])
    config = TrainConfig(
        eta=0.05, rank=1, max_epochs=100, optimizer="sgd", fixed_lambda=0.0, convergence_eps=1.0, patience=3
    )
    _, reports = train_baseline(single, single, config)
    assert len(reports) == 4


@pytest.mark.parametrize(
    "kwargs",
    [
        {"eta": 0.0, "rank": 2, "max_epochs": 1, "optimizer": "sgd", "fixed_lambda": 0.1},
        {"eta": 0.1, "rank": 0, "max_epochs": 1, "optimizer": "sgd", "fixed_lambda": 0.1},
        {"eta": 0.1, "rank": 2, "max_epochs": 0, "optimizer": "sgd", "fixed_lambda": 0.1},
        {"eta": 0.1, "rank": 2, "max_epochs": 1, "optimizer": "momentum"},
        {"eta": 0.1, "rank": 2, "max_epochs": 1, "optimizer": "lambda_opt"},
        {"eta": 0.1, "rank": 2, "max_epochs": 1, "optimizer": "rmsprop", "fixed_lambda": 0.1},
    ],
)
def test_invalid_configs_are_rejected(kwargs):
    with pytest.raises(UsageError):
        TrainConfig(**kwargs)


def test_trainer_rejects_mismatched_inputs(planted_small, ukdale_gains):
    other = ObservedMatrix(m=4, n=4, rows=[0], cols=[0], values=[1.0])
    with pytest.raises(UsageError):
        train_lambda_opt(planted_small["train"], other, _lambda_opt_config(ukdale_gains))
    baseline = TrainConfig(eta=0.1, rank=2, max_epochs=1, optimizer="sgd", fixed_lambda=0.1)
    with pytest.raises(UsageError):
        train_lambda_opt(planted_small["train"], planted_small["test"], baseline)
