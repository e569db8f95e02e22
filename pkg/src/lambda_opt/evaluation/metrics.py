"""Held-out imputation accuracy: RMSE and MAE.

This module evaluates a factor pair against observed entries it was
NOT necessarily trained on. It does NOT mutate factors or data.

Rules:
- Residuals are observed minus predicted, in the space the factors were trained in
- Sums use exact floating summation (math.fsum) so large test sets stay accurate
- An empty or dimension-mismatched test set is a usage error
"""

import math
from dataclasses import dataclass

import numpy as np

from lambda_opt.data.data_io import NormalizationParams, denormalize_values
from lambda_opt.errors import UsageError
from lambda_opt.model.core_model import FactorPair, ObservedMatrix, predict_entries


@dataclass(frozen=True)
class EvalResult:
    """Accuracy over a test set."""

    rmse: float
    mae: float
    count: int

    def as_record(self) -> dict[str, float | int]:
        return {"rmse": self.rmse, "mae": self.mae, "count": self.count}


def metrics_from_residuals(residuals: np.ndarray) -> EvalResult:
    """RMSE and MAE of a residual vector.

    Args:
        residuals: 1-D array of observed - predicted values.

    Returns:
        EvalResult with rmse = sqrt(mean(r^2)), mae = mean(|r|).
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    count = int(residuals.size)
    if count == 0:
        raise UsageError("Cannot evaluate an empty test set.")

    squared_mean = math.fsum(residuals * residuals) / count
    absolute_mean = math.fsum(np.abs(residuals)) / count
    rmse = math.sqrt(squared_mean)
    # mae <= rmse holds mathematically; clamp the last-ulp rounding case
    mae = min(absolute_mean, rmse)
    return EvalResult(rmse=rmse, mae=mae, count=count)


def evaluate(data_test: ObservedMatrix, factors: FactorPair) -> EvalResult:
    """Evaluate factors on data_test in the training (normalized) space."""
    if data_test is None or len(data_test) == 0:
        raise UsageError("Cannot evaluate an empty test set.")
    predictions = predict_entries(data_test, factors)
    return metrics_from_residuals(data_test.values - predictions)


def evaluate_denormalized(
    data_test: ObservedMatrix,
    factors: FactorPair,
    params: NormalizationParams,
) -> EvalResult:
    """Evaluate after mapping both observations and predictions back to source units.

    data_test must be in the normalized space the factors were trained in.
    """
    predictions = predict_entries(data_test, factors)
    observed = denormalize_values(data_test.values, params)
    restored = denormalize_values(predictions, params)
    return metrics_from_residuals(observed - restored)


if __name__ == "__main__":
    print("=" * 60)
    print("METRICS - residual examples")
    print("-" * 60)
    for label, values in [
        ("perfect", [0.0, 0.0]),
        ("symmetric", [1.0, -1.0]),
        ("skewed", [0.0, 2.0]),
    ]:
        result = metrics_from_residuals(np.array(values))
        print(f"  {label:10} rmse={result.rmse:.5f} mae={result.mae:.5f} count={result.count}")
    print("  Expected: 0/0, 1/1, 1.41421/1")
