"""Run settings: built-in defaults, dataset presets and precedence.

This module turns CLI flags, an optional config file and an optional
preset into one flat settings dictionary, and builds the typed
TrainConfig / DatasetSpec from it. It does NOT run anything.

Precedence (highest first):
1) CLI flags
2) Config file (JSON object, or KEY=VALUE lines read with python-dotenv)
3) Preset (ukdale, iawe)
4) BUILTIN_DEFAULTS

Rules:
- A setting left unset (None) at a higher level never masks a lower level
- Unknown keys in a config file are a usage error
- A preset lambda also sets the default clip bound lambda_max = 2 * lambda
"""

import json
from pathlib import Path
from typing import Any

from dotenv import dotenv_values

from lambda_opt.control.pid_controller import ERROR_MODES, PidGains
from lambda_opt.data.data_io import NORMALIZATION_MODES, DatasetSpec, parse_synthetic_string
from lambda_opt.errors import UsageError
from lambda_opt.training.optimizers import ALL_OPTIMIZERS, OPTIMIZER_LAMBDA_OPT
from lambda_opt.training.trainers import TrainConfig

ENV_PREFIX = "LAMBDA_OPT_"
LAMBDA_MAX_FACTOR = 2.0

BUILTIN_DEFAULTS: dict[str, Any] = {
    "optimizer": OPTIMIZER_LAMBDA_OPT,
    "eta": 0.05,
    "rank": 5,
    "epochs": 200,
    "seed": 0,
    "shuffle": True,
    "eps": 1e-5,
    "patience": 5,
    "normalize": "minmax",
    "split": 0.8,
    "split_seed": 0,
    "lambda_min": 0.0,
    "error_mode": "signed",
    "momentum": 0.9,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
}

# Per-dataset hyperparameters reported for the two power-load corpora
PRESETS: dict[str, dict[str, float]] = {
    "ukdale": {"eta": 5e-2, "lambda": 9e-4, "kp": 5e-2, "ki": 5e-4, "kd": 5e-4},
    "iawe": {"eta": 5e-2, "lambda": 5e-4, "kp": 5e-3, "ki": 5e-4, "kd": 5e-5},
}

SETTING_TYPES: dict[str, type] = {
    "optimizer": str,
    "eta": float,
    "rank": int,
    "epochs": int,
    "seed": int,
    "shuffle": bool,
    "eps": float,
    "patience": int,
    "normalize": str,
    "split": float,
    "split_seed": int,
    "lambda": float,
    "kp": float,
    "ki": float,
    "kd": float,
    "lambda_min": float,
    "lambda_max": float,
    "error_mode": str,
    "momentum": float,
    "beta1": float,
    "beta2": float,
    "adam_eps": float,
    "data": str,
    "header": str,
    "rows": int,
    "cols": int,
    "delimiter": str,
    "synth": str,
    "preset": str,
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def normalize_key(key: str) -> str:
    """'LAMBDA_OPT_SPLIT-SEED' -> 'split_seed'."""
    key = key.strip().lower().replace("-", "_")
    prefix = ENV_PREFIX.lower()
    if key.startswith(prefix):
        key = key[len(prefix):]
    return key


def coerce_value(key: str, value: Any) -> Any:
    """Convert a config-file value to the type of its setting."""
    if value is None:
        return None
    kind = SETTING_TYPES[key]
    if kind is bool:
        if isinstance(value, bool):
            return value
        word = str(value).strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise UsageError(f"Setting {key!r} expects a boolean, got {value!r}.")
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise UsageError(f"Setting {key!r} expects an integer, got {value!r}.")
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"Setting {key!r} expects {kind.__name__}, got {value!r}.") from exc


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read settings from a .json object or a KEY=VALUE file.

    Raises:
        UsageError: unknown keys or values of the wrong type.
        OSError: the file cannot be read.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file {path} does not exist.")

    if path.suffix.lower() == ".json":
        with open(path, mode="r", encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise UsageError(f"Config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"Config file {path} must hold a JSON object.")
    else:
        raw = dotenv_values(path)

    settings: dict[str, Any] = {}
    unknown = []
    for key, value in raw.items():
        name = normalize_key(key)
        if name not in SETTING_TYPES:
            unknown.append(key)
            continue
        settings[name] = coerce_value(name, value)
    if unknown:
        raise UsageError(f"Unknown settings in {path}: {sorted(unknown)}.")
    return settings


def _preset_values(name: str) -> dict[str, Any]:
    if name not in PRESETS:
        raise UsageError(f"Unknown preset {name!r}; expected one of {sorted(PRESETS)}.")
    return dict(PRESETS[name])


def resolve_settings(
    cli: dict[str, Any] | None,
    config_file: dict[str, Any] | None = None,
    preset: str | None = None,
) -> dict[str, Any]:
    """Merge defaults < preset < config file < CLI into one settings dict.

    Args:
        cli: Flag values; None means "not given".
        config_file: Output of load_config_file, if any.
        preset: Preset name; falls back to a "preset" key in cli or the file.

    Returns:
        Flat dict holding every key of SETTING_TYPES (unset keys are None).
    """
    cli = {k: v for k, v in (cli or {}).items() if v is not None}
    file_values = {k: v for k, v in (config_file or {}).items() if v is not None}
    preset = preset or cli.get("preset") or file_values.get("preset")

    unknown = sorted(set(cli) - set(SETTING_TYPES))
    if unknown:
        raise UsageError(f"Unknown settings {unknown}.")

    resolved: dict[str, Any] = {key: None for key in SETTING_TYPES}
    resolved.update(BUILTIN_DEFAULTS)
    if preset:
        resolved.update(_preset_values(preset))
    resolved.update(file_values)
    resolved.update(cli)
    resolved["preset"] = preset
    return resolved


def effective_lambda_max(settings: dict[str, Any]) -> float | None:
    if settings.get("lambda_max") is not None:
        return float(settings["lambda_max"])
    if settings.get("lambda") is not None:
        return LAMBDA_MAX_FACTOR * float(settings["lambda"])
    return None


def validate_train_settings(settings: dict[str, Any]) -> dict[str, Any]:
    """Check that a resolved settings dict can drive a training run.

    Checks:
    1. Exactly one of data / synth is set
    2. Optimizer, normalization and error mode are known
    3. Baselines have a fixed lambda
    4. lambda_opt has kp, ki, kd and a resolvable lambda_max

    Returns:
        Dictionary with:
        - ok: bool - True if all checks pass
        - reason: str - Human-readable explanation
    """
    try:
        has_data = bool(settings.get("data"))
        has_synth = bool(settings.get("synth"))
        if has_data == has_synth:
            return {"ok": False, "reason": "Exactly one of --data or --synth is required"}

        optimizer = settings.get("optimizer")
        if optimizer not in ALL_OPTIMIZERS:
            return {"ok": False, "reason": f"Unknown optimizer {optimizer!r}"}

        if settings.get("normalize") not in NORMALIZATION_MODES:
            return {"ok": False, "reason": f"Unknown normalization {settings.get('normalize')!r}"}

        if settings.get("error_mode") not in ERROR_MODES:
            return {"ok": False, "reason": f"Unknown error mode {settings.get('error_mode')!r}"}

        if optimizer == OPTIMIZER_LAMBDA_OPT:
            missing = [key for key in ("kp", "ki", "kd") if settings.get(key) is None]
            if missing:
                return {
                    "ok": False,
                    "reason": f"lambda_opt needs {missing} (set them or use --preset)",
                }
            if effective_lambda_max(settings) is None:
                return {"ok": False, "reason": "lambda_opt needs --lambda-max or --lambda"}
        elif settings.get("lambda") is None:
            return {"ok": False, "reason": f"{optimizer} needs --lambda (or --preset)"}

        return {"ok": True, "reason": "Settings validated"}

    except Exception:
        return {"ok": False, "reason": "Unexpected error during settings validation"}


def build_gains(settings: dict[str, Any]) -> PidGains:
    lambda_max = effective_lambda_max(settings)
    if lambda_max is None:
        raise UsageError("lambda_opt needs --lambda-max or --lambda.")
    return PidGains(
        kp=float(settings["kp"]),
        ki=float(settings["ki"]),
        kd=float(settings["kd"]),
        lambda_min=float(settings["lambda_min"]),
        lambda_max=lambda_max,
        error_mode=settings["error_mode"],
    )


def build_train_config(settings: dict[str, Any], optimizer: str | None = None) -> TrainConfig:
    """TrainConfig for settings["optimizer"] (or the given optimizer override).

    Raises:
        UsageError: a required setting is missing or out of range.
    """
    optimizer = optimizer or settings["optimizer"]
    gains = None
    fixed_lambda = None
    if optimizer == OPTIMIZER_LAMBDA_OPT:
        missing = [key for key in ("kp", "ki", "kd") if settings.get(key) is None]
        if missing:
            raise UsageError(f"lambda_opt needs {missing} (set them or use --preset).")
        gains = build_gains(settings)
    else:
        if settings.get("lambda") is None:
            raise UsageError(f"{optimizer} needs --lambda (or --preset).")
        fixed_lambda = float(settings["lambda"])

    return TrainConfig(
        eta=float(settings["eta"]),
        rank=int(settings["rank"]),
        max_epochs=int(settings["epochs"]),
        seed=int(settings["seed"]),
        optimizer=optimizer,
        fixed_lambda=fixed_lambda,
        gains=gains,
        shuffle=bool(settings["shuffle"]),
        convergence_eps=float(settings["eps"]),
        patience=int(settings["patience"]),
        momentum=float(settings["momentum"]),
        beta1=float(settings["beta1"]),
        beta2=float(settings["beta2"]),
        adam_eps=float(settings["adam_eps"]),
    )


def build_dataset_spec(settings: dict[str, Any]) -> DatasetSpec:
    """DatasetSpec from the data/synth, normalization and split settings."""
    synthetic = None
    if settings.get("synth"):
        synthetic = parse_synthetic_string(settings["synth"], default_seed=int(settings["seed"]))
    return DatasetSpec(
        path=settings.get("data") or None,
        header_path=settings.get("header") or None,
        m=settings.get("rows"),
        n=settings.get("cols"),
        delimiter=settings.get("delimiter") or None,
        synthetic=synthetic,
        normalization=settings["normalize"],
        split_ratio=float(settings["split"]),
        split_seed=int(settings["split_seed"]),
    )


if __name__ == "__main__":
    print("=" * 70)
    print("SETTINGS RESOLUTION")
    print("=" * 70)
    resolved = resolve_settings(
        cli={"synth": "m=100,n=50,rank=3,density=0.3,noise=0.01", "eta": 0.02},
        config_file={"epochs": 50, "eta": 0.5},
        preset="ukdale",
    )
    for key in ("eta", "epochs", "lambda", "kp", "ki", "kd", "rank"):
        print(f"  {key:8} {resolved[key]}")
    print(f"  lambda_max (derived) {effective_lambda_max(resolved)}")
    print(f"  validation: {validate_train_settings(resolved)}")
