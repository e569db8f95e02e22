"""Per-epoch report files and the append-only run journal.

This module records what a training run produced. It does NOT train.

Report files (one directory per run):
- epochs.csv: epoch, train_rmse, valid_rmse, valid_mae, mean_lambda
- epoch_timings.csv: epoch, wall_time_ms

Rules:
- Report files are append-only and ordered by epoch
- Floats are written with repr so they parse back bit-for-bit
- epochs.csv holds no timing, so identical runs give identical bytes
- The run journal is fail-safe: errors are logged and never block a run
"""

import csv
import datetime
import logging
from pathlib import Path
from typing import Any

from lambda_opt.training.trainers import EpochReport

_logger = logging.getLogger(__name__)

REPORT_FILENAME = "epochs.csv"
TIMINGS_FILENAME = "epoch_timings.csv"
RUN_JOURNAL_FILENAME = "run_journal.csv"

REPORT_FIELDS = ["epoch", "train_rmse", "valid_rmse", "valid_mae", "mean_lambda"]
TIMING_FIELDS = ["epoch", "wall_time_ms"]
RUN_JOURNAL_FIELDS = [
    "timestamp",
    "command",
    "optimizer",
    "seed",
    "dataset",
    "status",
    "epochs",
    "converged",
    "rmse",
    "mae",
    "wall_time_ms",
    "reason",
    "out_dir",
]


def utc_timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat().replace("+00:00", "Z")


def _start_file(path: Path, fields: list[str]) -> None:
    with open(path, mode="w", newline="", encoding="utf-8") as f:
        csv.DictWriter(f, fieldnames=fields, lineterminator="\n").writeheader()


def _append_row(path: Path, fields: list[str], row: dict[str, Any]) -> None:
    with open(path, mode="a", newline="", encoding="utf-8") as f:
        csv.DictWriter(f, fieldnames=fields, lineterminator="\n").writerow(row)


class EpochReportWriter:
    """Streams EpochReports into epochs.csv and epoch_timings.csv.

    Pass `writer.append` as the trainer's on_epoch callback. Creating
    the writer truncates both files and writes their header lines.
    """

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.report_path = self.out_dir / REPORT_FILENAME
        self.timings_path = self.out_dir / TIMINGS_FILENAME
        self.count = 0
        _start_file(self.report_path, REPORT_FIELDS)
        _start_file(self.timings_path, TIMING_FIELDS)

    def append(self, report: EpochReport) -> None:
        if report.epoch != self.count + 1:
            raise ValueError(f"Expected epoch {self.count + 1}, got {report.epoch}.")
        _append_row(
            self.report_path,
            REPORT_FIELDS,
            {
                "epoch": report.epoch,
                "train_rmse": repr(report.train_rmse),
                "valid_rmse": repr(report.valid_rmse),
                "valid_mae": repr(report.valid_mae),
                "mean_lambda": repr(report.mean_lambda),
            },
        )
        _append_row(
            self.timings_path,
            TIMING_FIELDS,
            {"epoch": report.epoch, "wall_time_ms": report.wall_time_ms},
        )
        self.count += 1


def write_epoch_reports(out_dir: str | Path, reports: list[EpochReport]) -> EpochReportWriter:
    writer = EpochReportWriter(out_dir)
    for report in reports:
        writer.append(report)
    return writer


def read_epoch_reports(
    report_path: str | Path,
    timings_path: str | Path | None = None,
) -> list[EpochReport]:
    """Parse epochs.csv (and optionally epoch_timings.csv) back into EpochReports."""
    timings: dict[int, int] = {}
    if timings_path is not None and Path(timings_path).exists():
        with open(timings_path, mode="r", newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                timings[int(row["epoch"])] = int(row["wall_time_ms"])

    reports: list[EpochReport] = []
    with open(report_path, mode="r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != REPORT_FIELDS:
            raise ValueError(f"{report_path} header {reader.fieldnames} != {REPORT_FIELDS}.")
        for row in reader:
            epoch = int(row["epoch"])
            reports.append(
                EpochReport(
                    epoch=epoch,
                    train_rmse=float(row["train_rmse"]),
                    valid_rmse=float(row["valid_rmse"]),
                    valid_mae=float(row["valid_mae"]),
                    mean_lambda=float(row["mean_lambda"]),
                    wall_time_ms=timings.get(epoch, 0),
                )
            )
    return reports


def log_run(journal_path: str | Path, entry: dict[str, Any]) -> None:
    """Append one summary row to the run journal; never raises.

    Args:
        journal_path: CSV file; created with a header line on first use.
        entry: Values keyed by RUN_JOURNAL_FIELDS; missing keys stay empty,
            extra keys are ignored. timestamp defaults to now (UTC).
    """
    try:
        row = {field: entry.get(field) for field in RUN_JOURNAL_FIELDS}
        if not row["timestamp"]:
            row["timestamp"] = utc_timestamp()

        path = Path(journal_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_exists = path.exists()
        with open(path, mode="a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=RUN_JOURNAL_FIELDS, lineterminator="\n")
            if not file_exists:
                writer.writeheader()
            writer.writerow(row)

    except Exception as exc:
        _logger.warning("Run journal append to %s failed: %s", journal_path, exc)


def journal_entry_from_result(
    command: str,
    result: dict[str, Any],
    dataset: str,
    out_dir: str | Path | None,
) -> dict[str, Any]:
    """Flatten a run_training_pipeline result into a run-journal row."""
    final = result.get("eval")
    return {
        "command": command,
        "optimizer": result.get("optimizer"),
        "seed": result.get("seed"),
        "dataset": dataset,
        "status": "ok" if result.get("valid") else (result.get("error_kind") or "error"),
        "epochs": result.get("epochs_run"),
        "converged": result.get("converged"),
        "rmse": repr(final.rmse) if final is not None else "",
        "mae": repr(final.mae) if final is not None else "",
        "wall_time_ms": result.get("wall_time_ms"),
        "reason": result.get("reason", ""),
        "out_dir": str(out_dir) if out_dir is not None else "",
    }


if __name__ == "__main__":
    import tempfile

    print("=" * 60)
    print("EPOCH JOURNAL TEST")
    print("=" * 60)
    with tempfile.TemporaryDirectory() as tmp:
        sample = [
            EpochReport(1, 0.31, 0.33, 0.25, 0.0009, 12),
            EpochReport(2, 0.12, 0.14, 0.10, 0.0011, 11),
        ]
        writer = write_epoch_reports(tmp, sample)
        restored = read_epoch_reports(writer.report_path, writer.timings_path)
        print(f"round trip equal: {restored == sample}")
        log_run(Path(tmp) / RUN_JOURNAL_FILENAME, {"command": "demo", "status": "ok"})
        print((Path(tmp) / RUN_JOURNAL_FILENAME).read_text(encoding="utf-8"))
