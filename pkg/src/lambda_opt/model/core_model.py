"""Core factor model: sparse observations, latent factors, prediction, loss.

This module holds the data structures every other module consumes.
It does NOT train anything; trainers mutate FactorPair rows through
the operations defined here and in lambda_opt.training.

Model:
- R is approximated by U @ V.T, U is m x k, V is n x k
- Only the observed set (the entries of an ObservedMatrix) enters the loss
- All arithmetic is float64
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from lambda_opt.errors import UsageError

INIT_LOW = 0.01
INIT_HIGH = 0.1
# bounds the (entries x k) temporaries of batch prediction
PREDICT_CHUNK_VALUES = 1 << 20


@dataclass(frozen=True)
class ObservedEntry:
    """One measurement r_ij at (row, col)."""

    row: int
    col: int
    value: float

    def __post_init__(self) -> None:
        if self.row < 0 or self.col < 0:
            raise UsageError(f"Negative index in entry ({self.row}, {self.col}).")
        if not math.isfinite(self.value):
            raise UsageError(f"Non-finite value {self.value!r} at ({self.row}, {self.col}).")


@dataclass(frozen=True, eq=False)
class ObservedMatrix:
    """Sparse set of observed (row, col, value) triples with declared shape m x n.

    Entries are stored column-wise as three aligned arrays. Order is
    preserved; it is the visiting order when shuffling is disabled.
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

        if self.m < 1 or self.n < 1:
            raise UsageError(f"Matrix dimensions must be >= 1, got {self.m}x{self.n}.")
        if rows.ndim != 1 or rows.shape != cols.shape or rows.shape != values.shape:
            raise UsageError("rows, cols and values must be 1-D arrays of equal length.")
        if rows.size == 0:
            raise UsageError("An ObservedMatrix needs at least one entry.")
        if rows.size > self.m * self.n:
            raise UsageError(f"{rows.size} entries cannot fit in a {self.m}x{self.n} matrix.")

        out_of_bounds = (rows < 0) | (rows >= self.m) | (cols < 0) | (cols >= self.n)
        if out_of_bounds.any():
            first = int(np.flatnonzero(out_of_bounds)[0])
            raise UsageError(
                f"Entry ({rows[first]}, {cols[first]}) outside declared {self.m}x{self.n}."
            )

        non_finite = ~np.isfinite(values)
        if non_finite.any():
            first = int(np.flatnonzero(non_finite)[0])
            raise UsageError(f"Non-finite value at ({rows[first]}, {cols[first]}).")

        duplicates = find_duplicate_positions(rows, cols, self.n)
        if duplicates:
            pairs = [(int(rows[p]), int(cols[p])) for p in duplicates[:10]]
            raise UsageError(f"Duplicate (row, col) observations: {pairs}.")

    @classmethod
    def from_entries(cls, m: int, n: int, entries: list[ObservedEntry]) -> "ObservedMatrix":
        """Build a matrix from ObservedEntry records."""
        return cls(
            m=m,
            n=n,
            rows=np.array([e.row for e in entries], dtype=np.int64),
            cols=np.array([e.col for e in entries], dtype=np.int64),
            values=np.array([e.value for e in entries], dtype=np.float64),
        )

    @cached_property
    def entries(self) -> tuple[ObservedEntry, ...]:
        return tuple(
            ObservedEntry(int(r), int(c), float(v))
            for r, c, v in zip(self.rows, self.cols, self.values)
        )

    def __len__(self) -> int:
        return int(self.rows.size)

    def subset(self, positions: np.ndarray) -> "ObservedMatrix":
        """Return the entries at the given positions, same declared shape."""
        positions = np.asarray(positions, dtype=np.int64)
        return ObservedMatrix(
            m=self.m,
            n=self.n,
            rows=self.rows[positions],
            cols=self.cols[positions],
            values=self.values[positions],
        )

    def with_values(self, values: np.ndarray) -> "ObservedMatrix":
        """Same positions, replaced values."""
        return ObservedMatrix(m=self.m, n=self.n, rows=self.rows, cols=self.cols, values=values)


def find_duplicate_positions(rows: np.ndarray, cols: np.ndarray, n: int) -> list[int]:
    """Positions whose (row, col) pair already occurred earlier in the sequence."""
    linear = np.asarray(rows, dtype=np.int64) * n + np.asarray(cols, dtype=np.int64)
    _, first_index = np.unique(linear, return_index=True)
    if first_index.size == linear.size:
        return []
    repeated = np.ones(linear.size, dtype=bool)
    repeated[first_index] = False
    return [int(p) for p in np.flatnonzero(repeated)]


@dataclass(eq=False)
class FactorPair:
    """Dense latent matrices U (m x k) and V (n x k).

    Mutable, single writer. A training step on entry (i, j) touches
    only U[i] and V[j].
    """

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self) -> None:
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise UsageError("U and V must be 2-D matrices.")
        if self.U.shape[1] != self.V.shape[1] or self.U.shape[1] < 1:
            raise UsageError(
                f"U and V must share a rank k >= 1, got {self.U.shape} and {self.V.shape}."
            )

    @property
    def m(self) -> int:
        return int(self.U.shape[0])

    @property
    def n(self) -> int:
        return int(self.V.shape[0])

    @property
    def k(self) -> int:
        return int(self.U.shape[1])

    @property
    def storage_size(self) -> int:
        """Number of float values held: (m + n) * k."""
        return int(self.U.size + self.V.size)

    def copy(self) -> "FactorPair":
        return FactorPair(U=self.U.copy(), V=self.V.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.U).all() and np.isfinite(self.V).all())


def _check_index(factors: FactorPair, i: int, j: int) -> None:
    if not (0 <= i < factors.m and 0 <= j < factors.n):
        raise UsageError(f"Index ({i}, {j}) outside factor shape {factors.m}x{factors.n}.")


def row_dot(u: np.ndarray, v: np.ndarray) -> float:
    """<u, v> as an elementwise product and a pairwise sum; stays single-threaded at any k."""
    return float(np.add.reduce(u * v))


def predict(factors: FactorPair, i: int, j: int) -> float:
    """Return <U_i, V_j>."""
    _check_index(factors, i, j)
    return row_dot(factors.U[i], factors.V[j])


def residual(observed: float, factors: FactorPair, i: int, j: int) -> float:
    """Return e_ij = observed - <U_i, V_j> (observed minus predicted)."""
    return observed - predict(factors, i, j)


def sample_loss(
    observed: float,
    factors: FactorPair,
    i: int,
    j: int,
    lambda_ij: float,
) -> float:
    """Per-sample objective e_ij^2 + lambda_ij * (|U_i|^2 + |V_j|^2).

    Its gradient with respect to U_i and V_j is exactly the one applied
    by lambda_opt.training.trainers.grad_sample.
    """
    if lambda_ij < 0:
        raise UsageError(f"lambda_ij must be >= 0, got {lambda_ij}.")
    e = residual(observed, factors, i, j)
    u = factors.U[i]
    v = factors.V[j]
    return e * e + lambda_ij * (float(np.dot(u, u)) + float(np.dot(v, v)))


def check_compatible(data: ObservedMatrix, factors: FactorPair) -> None:
    """Raise UsageError unless data and factors share m and n."""
    if data.m != factors.m or data.n != factors.n:
        raise UsageError(
            f"Dimension mismatch: data is {data.m}x{data.n}, "
            f"factors are {factors.m}x{factors.n}."
        )


def predict_entries(data: ObservedMatrix, factors: FactorPair) -> np.ndarray:
    """Predictions for every observed position of data, in entry order."""
    check_compatible(data, factors)
    step = max(1, PREDICT_CHUNK_VALUES // factors.k)
    predictions = np.empty(len(data), dtype=np.float64)
    for start in range(0, len(data), step):
        rows = data.rows[start:start + step]
        cols = data.cols[start:start + step]
        predictions[start:start + step] = np.einsum("ij,ij->i", factors.U[rows], factors.V[cols])
    return predictions


def total_loss(
    data: ObservedMatrix,
    factors: FactorPair,
    lam: float,
    subset: np.ndarray | None = None,
) -> float:
    """Global-lambda loss: sum of e_ij^2 over the subset + lam * (|U|_F^2 + |V|_F^2).

    Args:
        data: Observed entries; the whole set is used when subset is None.
        factors: Current factor pair.
        lam: Global regularization coefficient (>= 0).
        subset: Optional positions into data selecting the summed entries.
    """
    if lam < 0:
        raise UsageError(f"lambda must be >= 0, got {lam}.")
    if subset is not None:
        data = data.subset(subset)
    errors = data.values - predict_entries(data, factors)
    penalty = float(np.sum(factors.U * factors.U)) + float(np.sum(factors.V * factors.V))
    return math.fsum(errors * errors) + lam * penalty


def init_factors(m: int, n: int, k: int, seed: int) -> FactorPair:
    """Draw U and V independently uniform on [0.01, 0.1) from a seeded generator."""
    if m < 1 or n < 1 or k < 1:
        raise UsageError(f"m, n and k must be >= 1, got m={m}, n={n}, k={k}.")
    rng = np.random.default_rng(seed)
    U = rng.uniform(INIT_LOW, INIT_HIGH, size=(m, k))
    V = rng.uniform(INIT_LOW, INIT_HIGH, size=(n, k))
    return FactorPair(U=U, V=V)


if __name__ == "__main__":
    factors = FactorPair(U=np.array([[1.0, 0.0, 2.0]]), V=np.array([[3.0, 5.0, 1.0]]))
    print(f"predict: {predict(factors, 0, 0)}  (expected 5.0)")
    print(f"residual(observed=1): {residual(1.0, factors, 0, 0)}  (expected -4.0)")
    print(f"sample_loss(lambda=0.1): {sample_loss(5.0, factors, 0, 0, 0.1):.4f}")

    fresh = init_factors(3, 2, 4, seed=7)
    print(f"init shapes: U={fresh.U.shape}, V={fresh.V.shape}")
    print(f"init range: [{min(fresh.U.min(), fresh.V.min()):.4f}, "
          f"{max(fresh.U.max(), fresh.V.max()):.4f}]")
