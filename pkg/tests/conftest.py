import logging
from pathlib import Path

import pytest

from lambda_opt.control.pid_controller import PidGains
from lambda_opt.data.data_io import SyntheticSpec, generate_synthetic, normalize, split

UKDALE_GAINS = {"kp": 5e-2, "ki": 5e-4, "kd": 5e-4}


@pytest.fixture
def ukdale_gains() -> PidGains:
    return PidGains(lambda_min=0.0, lambda_max=1.8e-3, **UKDALE_GAINS)


@pytest.fixture
def planted_small() -> dict:
    """30 x 20 rank-2 planted matrix, half observed, minmax-normalized, split 80/20."""
    observed, truth = generate_synthetic(
        SyntheticSpec(m=30, n=20, rank=2, density=0.5, noise_sigma=0.0, seed=11)
    )
    normalized, params = normalize(observed, "minmax")
    train, test = split(normalized, 0.8, seed=0)
    return {
        "observed": observed,
        "truth": truth,
        "normalized": normalized,
        "params": params,
        "train": train,
        "test": test,
    }


@pytest.fixture
def write_text(tmp_path: Path):
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(autouse=True)
def reset_package_logger():
    """cli.main attaches a stderr handler bound to the capture stream of the current test."""
    package_logger = logging.getLogger("lambda_opt")
    handlers = list(package_logger.handlers)
    level = package_logger.level
    yield
    package_logger.handlers = handlers
    package_logger.setLevel(level)
