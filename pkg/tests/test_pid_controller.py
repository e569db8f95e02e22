import numpy as np
import pytest

from lambda_opt.control.pid_controller import (
    ERROR_MODE_ABSOLUTE,
    EntryPidState,
    PidGains,
    PidStateTable,
    clip_lambda,
    pid_raw,
    pid_step,
)
from lambda_opt.errors import UsageError


def _history_lambda(gains: PidGains, errors: list[float], t: int) -> float:
    """lambda at step t recomputed from the whole error history."""
    current = errors[t]
    previous = errors[t - 1] if t > 0 else 0.0
    integral = sum(errors[: t + 1])
    raw = gains.kp * current + gains.ki * integral + gains.kd * (current - previous)
    return min(gains.lambda_max, max(gains.lambda_min, raw))


def test_first_steps_example():
    gains = PidGains(kp=0.5, ki=0.1, kd=0.2, lambda_min=0.0, lambda_max=1.0)
    state = EntryPidState(lambda_ij=gains.lambda_min)
    assert pid_step(gains, state, 1.0) == pytest.approx(0.8)
    assert pid_step(gains, state, 0.5) == pytest.approx(0.3)
    assert state.integral == pytest.approx(1.5)
    assert state.prev_error == 0.5
    assert state.lambda_ij == pytest.approx(0.3)


def test_output_is_clipped_to_bounds():
    gains = PidGains(kp=1.0, ki=0.0, kd=0.0, lambda_min=0.01, lambda_max=0.05)
    assert pid_step(gains, EntryPidState(), 10.0) == 0.05
    assert pid_step(gains, EntryPidState(), -10.0) == 0.01
    assert clip_lambda(0.03, gains) == 0.03


def test_matches_history_evaluator_over_long_sequence():
    rng = np.random.default_rng(42)
    gains = PidGains(kp=0.05, ki=5e-3, kd=0.02, lambda_min=0.0, lambda_max=0.08)
    errors = rng.normal(0.1, 0.5, size=1000).tolist()
    state = EntryPidState(lambda_ij=gains.lambda_min)
    for t, e in enumerate(errors):
        lam = pid_step(gains, state, e)
        assert lam == pytest.approx(_history_lambda(gains, errors, t), abs=1e-12)
        assert gains.lambda_min <= lam <= gains.lambda_max


def test_absolute_mode_feeds_magnitude():
    signed = PidGains(kp=0.5, ki=0.0, kd=0.0, lambda_min=0.0, lambda_max=1.0)
    absolute = PidGains(kp=0.5, ki=0.0, kd=0.0, lambda_min=0.0, lambda_max=1.0, error_mode=ERROR_MODE_ABSOLUTE)
    assert pid_step(signed, EntryPidState(), -0.4) == 0.0
    state = EntryPidState()
    assert pid_step(absolute, state, -0.4) == pytest.approx(0.2)
    assert state.integral == pytest.approx(0.4)


def test_zero_gains_pin_lambda_to_bound():
    gains = PidGains(kp=0.0, ki=0.0, kd=0.0, lambda_min=0.02, lambda_max=0.02)
    state = EntryPidState(lambda_ij=gains.lambda_min)
    for e in (1.0, -3.0, 0.25):
        assert pid_step(gains, state, e) == 0.02


def test_pid_raw_does_not_mutate_and_rejects_non_finite():
    gains = PidGains(kp=1.0, ki=1.0, kd=1.0, lambda_min=0.0, lambda_max=1.0)
    state = EntryPidState(integral=0.5, prev_error=0.25)
    assert pid_raw(gains, state, 0.5) == pytest.approx(0.5 + 1.0 + 0.25)
    assert (state.integral, state.prev_error) == (0.5, 0.25)
    with pytest.raises(UsageError):
        pid_raw(gains, state, float("nan"))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kp": -1.0, "ki": 0.0, "kd": 0.0, "lambda_min": 0.0, "lambda_max": 1.0},
        {"kp": 0.0, "ki": 0.0, "kd": 0.0, "lambda_min": -0.1, "lambda_max": 1.0},
        {"kp": 0.0, "ki": 0.0, "kd": 0.0, "lambda_min": 0.5, "lambda_max": 0.1},
        {"kp": 0.0, "ki": 0.0, "kd": 0.0, "lambda_min": 0.0, "lambda_max": float("inf")},
        {"kp": 0.0, "ki": 0.0, "kd": 0.0, "lambda_min": 0.0, "lambda_max": 1.0, "error_mode": "squared"},
    ],
)
def test_invalid_gains_are_rejected(kwargs):
    with pytest.raises(UsageError):
        PidGains(**kwargs)


def test_state_table_allocation_and_mean(ukdale_gains):
    table = PidStateTable()
    table.allocate(5, ukdale_gains)
    assert len(table) == 5
    assert table.allocations == 5
    assert table.mean_lambda() == ukdale_gains.lambda_min

    pid_step(ukdale_gains, table[0], 1.0)
    assert table.mean_lambda() == pytest.approx(ukdale_gains.lambda_max / 5)

    table.allocate(3, ukdale_gains)
    assert len(table) == 3
    assert table.allocations == 8


def test_state_table_rejects_empty_allocation(ukdale_gains):
    with pytest.raises(UsageError):
        PidStateTable().allocate(0, ukdale_gains)
