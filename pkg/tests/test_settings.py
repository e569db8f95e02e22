import pytest

from lambda_opt.config.settings import (
    BUILTIN_DEFAULTS,
    build_dataset_spec,
    build_train_config,
    coerce_value,
    effective_lambda_max,
    load_config_file,
    normalize_key,
    resolve_settings,
    validate_train_settings,
)
from lambda_opt.errors import UsageError

SYNTH = "m=20,n=10,rank=2,density=0.5"


def test_defaults_fill_unset_keys():
    settings = resolve_settings({"synth": SYNTH})
    for key, value in BUILTIN_DEFAULTS.items():
        assert settings[key] == value
    assert settings["lambda"] is None
    assert settings["preset"] is None


def test_precedence_cli_over_file_over_preset():
    settings = resolve_settings(
        {"synth": SYNTH, "eta": 0.02, "rank": None},
        config_file={"eta": 0.5, "epochs": 50, "kp": 0.1},
        preset="ukdale",
    )
    assert settings["eta"] == 0.02
    assert settings["epochs"] == 50
    assert settings["kp"] == 0.1
    assert settings["ki"] == 5e-4
    assert settings["lambda"] == 9e-4
    assert settings["rank"] == BUILTIN_DEFAULTS["rank"]
    assert settings["preset"] == "ukdale"


def test_preset_can_come_from_config_file():
    settings = resolve_settings({"synth": SYNTH}, config_file={"preset": "iawe"})
    assert settings["lambda"] == 5e-4
    assert settings["kd"] == 5e-5


def test_unknown_preset_and_keys_are_rejected():
    with pytest.raises(UsageError):
        resolve_settings({}, preset="redd")
    with pytest.raises(UsageError):
        resolve_settings({"learning_rate": 0.1})


def test_preset_lambda_doubles_into_lambda_max():
    settings = resolve_settings({"synth": SYNTH}, preset="ukdale")
    assert effective_lambda_max(settings) == pytest.approx(1.8e-3)
    settings["lambda_max"] = 0.01
    assert effective_lambda_max(settings) == 0.01
    assert effective_lambda_max({"lambda": None, "lambda_max": None}) is None


def test_json_config_file(write_text):
    path = write_text("run.json", '{"epochs": 30, "shuffle": false, "split-seed": 4}')
    assert load_config_file(path) == {"epochs": 30, "shuffle": False, "split_seed": 4}


def test_key_value_config_file_is_coerced(write_text):
    path = write_text("run.env", "LAMBDA_OPT_EPOCHS=30\nshuffle=false\neta=0.01\n# comment\n")
    assert load_config_file(path) == {"epochs": 30, "shuffle": False, "eta": 0.01}


def test_config_file_errors(write_text, tmp_path):
    with pytest.raises(UsageError, match="Unknown settings"):
        load_config_file(write_text("bad.env", "colour=blue\n"))
    with pytest.raises(UsageError):
        load_config_file(write_text("bad.json", "[1, 2]"))
    with pytest.raises(UsageError):
        load_config_file(write_text("broken.json", "{"))
    with pytest.raises(UsageError):
        load_config_file(write_text("typed.env", "epochs=many\n"))
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "missing.env")


def test_key_and_value_helpers():
    assert normalize_key("LAMBDA_OPT_SPLIT-SEED") == "split_seed"
    assert coerce_value("shuffle", "On") is True
    assert coerce_value("rank", 4.0) == 4
    assert coerce_value("eta", None) is None
    with pytest.raises(UsageError):
        coerce_value("shuffle", "maybe")
    with pytest.raises(UsageError):
        coerce_value("rank", 2.5)


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"synth": None}, "Exactly one"),
        ({"data": "x.csv"}, "Exactly one"),
        ({"optimizer": "rmsprop"}, "Unknown optimizer"),
        ({"normalize": "log"}, "Unknown normalization"),
        ({"error_mode": "squared"}, "Unknown error mode"),
        ({"kp": None}, "needs"),
        ({"lambda": None}, "--lambda-max"),
        ({"optimizer": "adam", "lambda": None}, "adam needs --lambda"),
    ],
)
def test_validation_failures(overrides, fragment):
    settings = resolve_settings({"synth": SYNTH}, preset="ukdale")
    settings.update(overrides)
    result = validate_train_settings(settings)
    assert result["ok"] is False
    assert fragment in result["reason"]


def test_validation_passes_for_preset_and_baseline():
    assert validate_train_settings(resolve_settings({"synth": SYNTH}, preset="ukdale"))["ok"]
    baseline = resolve_settings({"synth": SYNTH, "optimizer": "nesterov", "lambda": 0.01})
    assert validate_train_settings(baseline) == {"ok": True, "reason": "Settings validated"}


def test_build_train_config_for_lambda_opt():
    settings = resolve_settings({"synth": SYNTH, "epochs": 12, "shuffle": False}, preset="ukdale")
    config = build_train_config(settings)
    assert config.optimizer == "lambda_opt"
    assert config.max_epochs == 12
    assert config.shuffle is False
    assert config.gains.kp == 5e-2
    assert config.gains.lambda_max == pytest.approx(1.8e-3)
    assert config.fixed_lambda is None


def test_build_train_config_optimizer_override():
    settings = resolve_settings({"synth": SYNTH}, preset="iawe")
    config = build_train_config(settings, optimizer="adam")
    assert config.optimizer == "adam"
    assert config.fixed_lambda == 5e-4
    assert config.gains is None
    with pytest.raises(UsageError):
        build_train_config(resolve_settings({"synth": SYNTH}), optimizer="sgd")


def test_build_dataset_spec():
    synthetic = build_dataset_spec(resolve_settings({"synth": SYNTH, "seed": 3, "split": 0.75}))
    assert synthetic.synthetic.m == 20 and synthetic.synthetic.seed == 3
    assert synthetic.split_ratio == 0.75
    assert synthetic.path is None

    from_file = build_dataset_spec(resolve_settings({"data": "load.csv", "rows": 5, "cols": 4}))
    assert (from_file.path, from_file.m, from_file.n) == ("load.csv", 5, 4)
    assert from_file.normalization == "minmax"
