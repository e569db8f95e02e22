"""Run manifests: everything needed to reproduce a training run.

A manifest echoes the fully resolved settings (every key, including
defaults), so `train --manifest manifest.json` re-runs the same
configuration and reproduces epochs.csv byte for byte.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from lambda_opt import __version__
from lambda_opt.errors import UsageError

MANIFEST_FILENAME = "manifest.json"
MANIFEST_KIND = "lambda-opt-run"


@dataclass
class RunManifest:
    """Record of one training run."""

    settings: dict[str, Any]
    seed: int
    started_at: str
    finished_at: str
    report_path: str
    timings_path: str
    version: str = __version__
    kind: str = MANIFEST_KIND
    final_eval: dict[str, Any] | None = None
    normalization: dict[str, Any] | None = None
    dataset: dict[str, Any] | None = None
    train_config: dict[str, Any] | None = None
    memory: dict[str, int] | None = None
    epochs_run: int = 0
    converged: bool = False
    artifacts: dict[str, str] = field(default_factory=dict)

    def as_record(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "RunManifest":
        if record.get("kind") != MANIFEST_KIND:
            raise UsageError(f"Not a run manifest (kind={record.get('kind')!r}).")
        known = {name for name in cls.__dataclass_fields__}
        return cls(**{key: value for key, value in record.items() if key in known})


def write_manifest(path: str | Path, manifest: RunManifest) -> None:
    with open(path, mode="w", encoding="utf-8") as f:
        json.dump(manifest.as_record(), f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path: str | Path) -> RunManifest:
    """Load a manifest written by write_manifest.

    Raises:
        UsageError: the file is not a run manifest.
        OSError: the file cannot be read.
    """
    with open(path, mode="r", encoding="utf-8") as f:
        try:
            record = json.load(f)
        except json.JSONDecodeError as exc:
            raise UsageError(f"Manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise UsageError(f"Manifest {path} must hold a JSON object.")
    return RunManifest.from_record(record)
