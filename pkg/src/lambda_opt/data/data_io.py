"""Dataset ingestion, normalization, splitting and synthetic generation.

This module turns files or generator parameters into ObservedMatrix
instances. It does NOT train or evaluate models.

File format:
- UTF-8 delimited text, one "row,col,value" triple per line
- An optional single header line (detected when none of its fields is numeric)
- m, n and the delimiter come from a JSON sidecar {"m": .., "n": .., "delimiter": ","},
  from explicit arguments, or are inferred as max index + 1

Rules:
- Duplicate (row, col) pairs are rejected, never averaged
- Non-finite values are rejected with their line number
- Every random choice is driven by an explicit seed
"""

import csv
import json
import logging
import math
from collections.abc import Iterator
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from lambda_opt.errors import DataLoadError, DegenerateDataError, UsageError
from lambda_opt.model.core_model import ObservedMatrix, find_duplicate_positions

_logger = logging.getLogger(__name__)

NORMALIZE_NONE = "none"
NORMALIZE_MINMAX = "minmax"
NORMALIZE_ZSCORE = "zscore"
NORMALIZATION_MODES = (NORMALIZE_NONE, NORMALIZE_MINMAX, NORMALIZE_ZSCORE)

DEFAULT_DELIMITER = ","
DEFAULT_SPLIT_RATIO = 0.8
HEADER_SUFFIX = ".header.json"
MAX_REPORTED_OFFENDERS = 20


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a planted low-rank dataset."""

    m: int
    n: int
    rank: int
    density: float
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1 or self.rank < 1:
            raise UsageError(f"m, n and rank must be >= 1, got {self.m}, {self.n}, {self.rank}.")
        if self.rank > min(self.m, self.n):
            raise UsageError(f"rank {self.rank} exceeds min(m, n) = {min(self.m, self.n)}.")
        if not (0.0 < self.density <= 1.0):
            raise UsageError(f"density must be in (0, 1], got {self.density}.")
        if self.observed_count < 1:
            raise UsageError("density * m * n must be at least 1.")
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise UsageError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}.")
        if self.seed < 0:
            raise UsageError(f"seed must be >= 0, got {self.seed}.")

    @property
    def observed_count(self) -> int:
        # round first so 0.3 * 5000 does not ceil to 1501
        return math.ceil(round(self.density * self.m * self.n, 9))


@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from and how it is prepared for training."""

    path: str | None = None
    header_path: str | None = None
    m: int | None = None
    n: int | None = None
    delimiter: str | None = None
    synthetic: SyntheticSpec | None = None
    normalization: str = NORMALIZE_MINMAX
    split_ratio: float = DEFAULT_SPLIT_RATIO
    split_seed: int = 0

    def __post_init__(self) -> None:
        if (self.path is None) == (self.synthetic is None):
            raise UsageError("A dataset needs exactly one of a data path or a synthetic spec.")
        if self.normalization not in NORMALIZATION_MODES:
            raise UsageError(
                f"normalization must be one of {NORMALIZATION_MODES}, got {self.normalization!r}."
            )
        if not (0.0 < self.split_ratio < 1.0):
            raise UsageError(f"split_ratio must be in (0, 1), got {self.split_ratio}.")

    def as_record(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class NormalizationParams:
    """Affine map x' = (x - offset) / scale, recorded for exact inversion."""

    mode: str
    offset: float = 0.0
    scale: float = 1.0

    def as_record(self) -> dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Delimited files
# ---------------------------------------------------------------------------


def default_header_path(data_path: str | Path) -> Path:
    return Path(f"{data_path}{HEADER_SUFFIX}")


def read_header(header_path: str | Path) -> dict[str, Any]:
    """Read a JSON sidecar declaring m, n and optionally the delimiter."""
    try:
        with open(header_path, mode="r", encoding="utf-8") as f:
            header = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataLoadError(f"Header {header_path} is not valid JSON: {exc}") from exc

    if not isinstance(header, dict) or "m" not in header or "n" not in header:
        raise DataLoadError(f"Header {header_path} must be an object with keys m and n.")
    return header


def write_header(header_path: str | Path, m: int, n: int, delimiter: str = DEFAULT_DELIMITER) -> None:
    with open(header_path, mode="w", encoding="utf-8") as f:
        json.dump({"m": m, "n": n, "delimiter": delimiter}, f, indent=2)
        f.write("\n")


def _is_number(field: str) -> bool:
    try:
        float(field)
    except ValueError:
        return False
    return True


def _looks_like_header(fields: list[str]) -> bool:
    """A header line has no numeric field at all; "1.0,2,3.5" is a bad data row."""
    return not any(_is_number(field) for field in fields)


def _decoded_lines(f: BinaryIO) -> Iterator[str]:
    for line_number, raw in enumerate(f, start=1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataLoadError(
                f"Line {line_number}: not valid UTF-8 ({exc.reason} at byte {exc.start}).",
                [line_number],
            ) from exc


def load_delimited(
    path: str | Path,
    m: int | None = None,
    n: int | None = None,
    delimiter: str | None = None,
    header_path: str | Path | None = None,
) -> ObservedMatrix:
    """Parse a triple file into a validated ObservedMatrix.

    Args:
        path: Data file with one row,col,value triple per line.
        m, n: Declared dimensions; override the sidecar header when given.
        delimiter: Field delimiter; overrides the sidecar header when given.
        header_path: Sidecar JSON; defaults to "<path>.header.json" if it exists.

    Raises:
        DataLoadError: parse failure, non-finite value, duplicate entry or
            index outside the declared bounds (line numbers attached).
    """
    sidecar = Path(header_path) if header_path else default_header_path(path)
    if sidecar.exists():
        header = read_header(sidecar)
        m = m if m is not None else int(header["m"])
        n = n if n is not None else int(header["n"])
        delimiter = delimiter or header.get("delimiter")
    elif header_path:
        raise DataLoadError(f"Header file {header_path} does not exist.")
    delimiter = delimiter or DEFAULT_DELIMITER

    rows: list[int] = []
    cols: list[int] = []
    values: list[float] = []
    line_numbers: list[int] = []

    with open(path, mode="rb") as f:
        reader = csv.reader(_decoded_lines(f), delimiter=delimiter)
        try:
            for fields in reader:
                line_number = reader.line_num
                fields = [field.strip() for field in fields]
                if not fields or all(field == "" for field in fields):
                    continue
                if line_number == 1 and _looks_like_header(fields):
                    continue
                if len(fields) != 3:
                    raise DataLoadError(
                        f"Line {line_number}: expected 3 fields, found {len(fields)}.",
                        [line_number],
                    )
                try:
                    row = int(fields[0])
                    col = int(fields[1])
                    value = float(fields[2])
                except ValueError as exc:
                    raise DataLoadError(
                        f"Line {line_number}: cannot parse triple ({exc}).", [line_number]
                    ) from exc

                if not math.isfinite(value):
                    raise DataLoadError(
                        f"Line {line_number}: non-finite value {fields[2]!r}.", [line_number]
                    )
                if row < 0 or col < 0:
                    raise DataLoadError(f"Line {line_number}: negative index.", [line_number])

                rows.append(row)
                cols.append(col)
                values.append(value)
                line_numbers.append(line_number)
        except csv.Error as exc:
            raise DataLoadError(f"Line {reader.line_num}: {exc}.", [reader.line_num]) from exc

    if not rows:
        raise DataLoadError(f"{path} contains no observations.")

    if m is None or n is None:
        inferred_m = max(rows) + 1
        inferred_n = max(cols) + 1
        _logger.warning(
            "No dimensions declared for %s; inferring %dx%d from indices",
            path,
            m if m is not None else inferred_m,
            n if n is not None else inferred_n,
        )
        m = m if m is not None else inferred_m
        n = n if n is not None else inferred_n

    out_of_bounds = [
        line for line, r, c in zip(line_numbers, rows, cols) if r >= m or c >= n
    ]
    if out_of_bounds:
        shown = out_of_bounds[:MAX_REPORTED_OFFENDERS]
        raise DataLoadError(
            f"{len(out_of_bounds)} entries outside declared {m}x{n}; lines {shown}.",
            out_of_bounds,
        )

    row_array = np.array(rows, dtype=np.int64)
    col_array = np.array(cols, dtype=np.int64)
    duplicates = find_duplicate_positions(row_array, col_array, n)
    if duplicates:
        lines = [line_numbers[p] for p in duplicates]
        raise DataLoadError(
            f"Duplicate (row, col) entries on lines {lines[:MAX_REPORTED_OFFENDERS]}.",
            lines,
        )

    matrix = ObservedMatrix(
        m=m,
        n=n,
        rows=row_array,
        cols=col_array,
        values=np.array(values, dtype=np.float64),
    )
    _logger.info("Loaded %d observations (%dx%d) from %s", len(matrix), m, n, path)
    return matrix


def write_triples(
    path: str | Path,
    matrix: ObservedMatrix,
    delimiter: str = DEFAULT_DELIMITER,
    with_sidecar: bool = True,
) -> None:
    """Write one triple per line; dimensions go to the sidecar, floats use repr so they round-trip."""
    with open(path, mode="w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        for row, col, value in zip(matrix.rows.tolist(), matrix.cols.tolist(), matrix.values.tolist()):
            writer.writerow([row, col, repr(value)])
    if with_sidecar:
        write_header(default_header_path(path), matrix.m, matrix.n, delimiter)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def normalize(matrix: ObservedMatrix, mode: str) -> tuple[ObservedMatrix, NormalizationParams]:
    """Fit and apply a normalization to the observed values.

    minmax maps the global min/max to [0, 1]; zscore maps to zero mean and
    unit sample standard deviation; none returns the matrix unchanged.

    Raises:
        UsageError: unknown mode, or zscore with fewer than 2 entries.
        DegenerateDataError: all values equal under minmax or zscore.
    """
    if mode not in NORMALIZATION_MODES:
        raise UsageError(f"normalization must be one of {NORMALIZATION_MODES}, got {mode!r}.")
    if mode == NORMALIZE_NONE:
        return matrix, NormalizationParams(mode=NORMALIZE_NONE)

    values = matrix.values
    if mode == NORMALIZE_MINMAX:
        low = float(values.min())
        high = float(values.max())
        if high == low:
            raise DegenerateDataError("All observed values are equal; minmax is undefined.")
        params = NormalizationParams(mode=mode, offset=low, scale=high - low)
    else:
        if len(matrix) < 2:
            raise UsageError("zscore normalization needs at least 2 entries.")
        mean = math.fsum(values) / values.size
        deviations = values - mean
        std = math.sqrt(math.fsum(deviations * deviations) / (values.size - 1))
        if std == 0.0:
            raise DegenerateDataError("All observed values are equal; zscore is undefined.")
        params = NormalizationParams(mode=mode, offset=mean, scale=std)

    return apply_normalization(matrix, params), params


def apply_normalization(matrix: ObservedMatrix, params: NormalizationParams) -> ObservedMatrix:
    """Apply previously fitted parameters to another matrix (e.g. a held-out file)."""
    if params.mode == NORMALIZE_NONE:
        return matrix
    return matrix.with_values((matrix.values - params.offset) / params.scale)


def denormalize_values(values: np.ndarray, params: NormalizationParams) -> np.ndarray:
    if params.mode == NORMALIZE_NONE:
        return np.asarray(values, dtype=np.float64)
    return np.asarray(values, dtype=np.float64) * params.scale + params.offset


def denormalize(matrix: ObservedMatrix, params: NormalizationParams) -> ObservedMatrix:
    """Inverse of normalize for the same parameters."""
    if params.mode == NORMALIZE_NONE:
        return matrix
    return matrix.with_values(denormalize_values(matrix.values, params))


# ---------------------------------------------------------------------------
# Splitting and synthesis
# ---------------------------------------------------------------------------


def split(
    matrix: ObservedMatrix,
    ratio: float = DEFAULT_SPLIT_RATIO,
    seed: int = 0,
) -> tuple[ObservedMatrix, ObservedMatrix]:
    """Seeded shuffle, then the first round(ratio * |entries|) positions go to train.

    Both sides keep the source entry order.
    """
    if not (0.0 < ratio < 1.0):
        raise UsageError(f"split ratio must be in (0, 1), got {ratio}.")
    total = len(matrix)
    train_count = int(round(ratio * total))
    if train_count < 1 or train_count >= total:
        raise UsageError(
            f"Split of {total} entries at ratio {ratio} leaves an empty side."
        )

    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    train_positions = np.sort(order[:train_count])
    test_positions = np.sort(order[train_count:])
    return matrix.subset(train_positions), matrix.subset(test_positions)


def generate_synthetic(spec: SyntheticSpec) -> tuple[ObservedMatrix, np.ndarray]:
    """Draw a planted rank-r matrix and sample noisy observations of it.

    U*, V* are uniform on [0, 1); truth = U* V*^T. ceil(density * m * n)
    distinct cells are sampled uniformly and Gaussian noise with
    standard deviation noise_sigma is added to their values.

    Returns:
        (observed entries, noiseless m x n truth)
    """
    rng = np.random.default_rng(spec.seed)
    u_true = rng.random((spec.m, spec.rank))
    v_true = rng.random((spec.n, spec.rank))
    truth = u_true @ v_true.T

    cells = np.sort(rng.choice(spec.m * spec.n, size=spec.observed_count, replace=False))
    rows = cells // spec.n
    cols = cells % spec.n
    values = truth[rows, cols].copy()
    if spec.noise_sigma > 0:
        values += spec.noise_sigma * rng.standard_normal(values.size)

    observed = ObservedMatrix(m=spec.m, n=spec.n, rows=rows, cols=cols, values=values)
    _logger.info(
        "Generated synthetic %dx%d rank-%d matrix with %d observations",
        spec.m,
        spec.n,
        spec.rank,
        len(observed),
    )
    return observed, truth


def parse_synthetic_string(text: str, default_seed: int = 0) -> SyntheticSpec:
    """Parse "m=100,n=50,rank=3,density=0.3,noise=0.01[,seed=7]"."""
    aliases = {"noise": "noise_sigma", "sigma": "noise_sigma", "r": "rank", "r_true": "rank"}
    fields: dict[str, str] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"Synthetic spec item {part!r} is not key=value.")
        key, value = part.split("=", 1)
        key = aliases.get(key.strip().lower(), key.strip().lower())
        fields[key] = value.strip()

    required = ("m", "n", "rank", "density")
    missing = [key for key in required if key not in fields]
    if missing:
        raise UsageError(f"Synthetic spec is missing {missing}.")
    unknown = sorted(set(fields) - set(required) - {"noise_sigma", "seed"})
    if unknown:
        raise UsageError(f"Unknown synthetic spec keys {unknown}.")

    try:
        return SyntheticSpec(
            m=int(fields["m"]),
            n=int(fields["n"]),
            rank=int(fields["rank"]),
            density=float(fields["density"]),
            noise_sigma=float(fields.get("noise_sigma", 0.0)),
            seed=int(fields.get("seed", default_seed)),
        )
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(f"Synthetic spec has a malformed number: {exc}") from exc


def load_dataset(spec: DatasetSpec) -> tuple[ObservedMatrix, np.ndarray | None]:
    """Produce the raw observations for a DatasetSpec (truth only for synthetic data)."""
    if spec.synthetic is not None:
        return generate_synthetic(spec.synthetic)
    matrix = load_delimited(
        spec.path,
        m=spec.m,
        n=spec.n,
        delimiter=spec.delimiter,
        header_path=spec.header_path,
    )
    return matrix, None


if __name__ == "__main__":
    synthetic = SyntheticSpec(m=100, n=50, rank=3, density=0.3, noise_sigma=0.01, seed=7)
    observed, truth = generate_synthetic(synthetic)
    print(f"observed entries: {len(observed)} (expected 1500)")
    print(f"truth singular values: {np.round(np.linalg.svd(truth, compute_uv=False)[:5], 6)}")

    normalized, params = normalize(observed, NORMALIZE_MINMAX)
    print(f"minmax params: {params}")
    train, test = split(normalized, 0.8, seed=0)
    print(f"split: train={len(train)} test={len(test)}")
