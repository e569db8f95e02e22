"""Exception types shared across lambda_opt.

Numerical operations raise these. Pipeline-level code (run_experiment,
benchmark rows) catches them and reports through result dictionaries.
"""


class LambdaOptError(Exception):
    """Base class for every error raised by lambda_opt."""


class UsageError(LambdaOptError, ValueError):
    """A precondition or configuration value was violated."""


class DegenerateDataError(UsageError):
    """Data cannot be normalized (all observed values equal)."""


class DataLoadError(LambdaOptError):
    """A data file could not be parsed into a valid ObservedMatrix.

    Attributes:
        lines: 1-based line numbers of the offending records, if known.
    """

    def __init__(self, message: str, lines: list[int] | None = None) -> None:
        super().__init__(message)
        self.lines = list(lines or [])


class DivergenceError(LambdaOptError):
    """Training produced non-finite or runaway factor values.

    Attributes:
        epoch: 1-based epoch in which the blow-up was detected.
        entry: (row, col) of the observed entry whose step diverged.
    """

    def __init__(self, epoch: int, entry: tuple[int, int], detail: str = "") -> None:
        message = f"Training diverged at epoch {epoch}, entry {entry}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.epoch = epoch
        self.entry = entry
