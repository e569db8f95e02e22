"""Discrete PID controller for the per-entry regularization coefficient.

Each observed entry (i, j) owns an EntryPidState. At every visit the
trainer feeds the current residual e_ij(t) and receives lambda_ij(t):

    raw = kp * e(t) + ki * sum_{tau<=t} e(tau) + kd * (e(t) - e(t-1))
    lambda_ij(t) = clip(raw, lambda_min, lambda_max)

Rules:
- The integral includes the current error (sum runs up to t inclusive)
- prev_error starts at 0, so the first derivative term is kd * e(1)
- lambda starts at lambda_min and is overwritten before any gradient uses it
- Clipping is the only windup guard
- error_mode "signed" feeds e as-is; "absolute" feeds |e|
"""

import logging
import math
from dataclasses import dataclass

from lambda_opt.errors import UsageError

_logger = logging.getLogger(__name__)

ERROR_MODE_SIGNED = "signed"
ERROR_MODE_ABSOLUTE = "absolute"
ERROR_MODES = (ERROR_MODE_SIGNED, ERROR_MODE_ABSOLUTE)


@dataclass(frozen=True)
class PidGains:
    """Controller constants and clip bounds."""

    kp: float
    ki: float
    kd: float
    lambda_min: float
    lambda_max: float
    error_mode: str = ERROR_MODE_SIGNED

    def __post_init__(self) -> None:
        for name in ("kp", "ki", "kd"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise UsageError(f"{name} must be finite and >= 0, got {value}.")
        if not (math.isfinite(self.lambda_min) and math.isfinite(self.lambda_max)):
            raise UsageError("lambda bounds must be finite.")
        if self.lambda_min < 0:
            raise UsageError(f"lambda_min must be >= 0, got {self.lambda_min}.")
        if self.lambda_max < self.lambda_min:
            raise UsageError(
                f"lambda_max ({self.lambda_max}) must not be below lambda_min ({self.lambda_min})."
            )
        if self.error_mode not in ERROR_MODES:
            raise UsageError(f"error_mode must be one of {ERROR_MODES}, got {self.error_mode!r}.")


@dataclass(slots=True)
class EntryPidState:
    """Controller memory for one observed entry."""

    integral: float = 0.0
    prev_error: float = 0.0
    lambda_ij: float = 0.0


class PidStateTable:
    """One EntryPidState per observed entry, indexed by entry position.

    `allocations` counts every state record ever created by this table,
    which is what the memory accounting reports.
    """

    def __init__(self) -> None:
        self.states: list[EntryPidState] = []
        self.allocations = 0

    def allocate(self, count: int, gains: PidGains) -> None:
        """(Re)create `count` fresh states with lambda at lambda_min."""
        if count < 1:
            raise UsageError(f"PID table needs at least one entry, got {count}.")
        self.states = [EntryPidState(lambda_ij=gains.lambda_min) for _ in range(count)]
        self.allocations += count
        _logger.debug("Allocated %d PID state records", count)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, position: int) -> EntryPidState:
        return self.states[position]

    def mean_lambda(self) -> float:
        if not self.states:
            return 0.0
        return math.fsum(s.lambda_ij for s in self.states) / len(self.states)


def pid_raw(gains: PidGains, state: EntryPidState, e_t: float) -> float:
    """Unclipped controller output for error e_t. Does not mutate state."""
    if not math.isfinite(e_t):
        raise UsageError(f"Controller input must be finite, got {e_t}.")
    return (
        gains.kp * e_t
        + gains.ki * (state.integral + e_t)
        + gains.kd * (e_t - state.prev_error)
    )


def clip_lambda(raw: float, gains: PidGains) -> float:
    """Constrain raw to [lambda_min, lambda_max]."""
    return min(gains.lambda_max, max(gains.lambda_min, raw))


def control_error(gains: PidGains, e_t: float) -> float:
    """Map a residual to the controller input according to error_mode."""
    if gains.error_mode == ERROR_MODE_ABSOLUTE:
        return abs(e_t)
    return e_t


def pid_step(gains: PidGains, state: EntryPidState, e_t: float) -> float:
    """Advance one entry's controller by one residual and return the clipped lambda."""
    e_t = control_error(gains, e_t)
    lam = clip_lambda(pid_raw(gains, state, e_t), gains)
    state.integral += e_t
    state.prev_error = e_t
    state.lambda_ij = lam
    return lam


if __name__ == "__main__":
    gains = PidGains(kp=0.5, ki=0.1, kd=0.2, lambda_min=0.0, lambda_max=1.0)
    state = EntryPidState(lambda_ij=gains.lambda_min)

    print("=" * 60)
    print("PID STEP SEQUENCE")
    print("-" * 60)
    for e in [1.0, 0.5, -0.25, 0.0]:
        raw = pid_raw(gains, state, e)
        lam = pid_step(gains, state, e)
        print(f"  e={e:+.3f}  raw={raw:+.4f}  lambda={lam:.4f}  integral={state.integral:+.4f}")
    print("  Expected lambda sequence starts 0.8, 0.3")

    ukdale = PidGains(kp=5e-2, ki=5e-4, kd=5e-4, lambda_min=0.0, lambda_max=1.8e-3)
    print(f"\n  UKDALE raw for e=1.0 on fresh state: {pid_raw(ukdale, EntryPidState(), 1.0):.4f}")
