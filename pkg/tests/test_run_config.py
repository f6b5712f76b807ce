from fractions import Fraction
from pathlib import Path

import pytest
from pydantic import ValidationError

from backend.models.run_config import Command, RunConfig, Suite
from backend.utils.scalars import ScalarMode
from config import settings


def test_defaults_come_from_settings():
    config = RunConfig(command="verify")
    assert config.order == settings.DEFAULT_ORDER
    assert config.deg == settings.DEFAULT_DEG
    assert config.seed == settings.DEFAULT_SEED
    assert config.mode == ScalarMode.FLOAT
    assert config.suite == Suite.ALL
    assert not config.has_params


def test_numbers_follow_the_mode():
    config = RunConfig(command="describe", eta="1/2", theta="1/3", t="2", mode="exact")
    assert config.command == Command.DESCRIBE
    assert config.params.eta == Fraction(1, 2)
    assert config.number("t") == 2
    floats = RunConfig(command="describe", eta="1/2", t="0.25")
    assert floats.params.eta == 0.5
    assert floats.optional_number("s", "3") == 3.0


def test_times_are_parsed_in_order():
    config = RunConfig(command="sample", times="1/2,1,3", mode="exact", out=Path("paths.csv"))
    assert config.time_list == [Fraction(1, 2), 1, 3]
    assert config.out == Path("paths.csv")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"command": "describe"},
        {"command": "describe", "t": "0"},
        {"command": "describe", "t": "abc"},
        {"command": "describe", "t": "1", "eta": "2", "theta": "-1"},
        {"command": "support-plot", "t": "-1"},
        {"command": "sample"},
        {"command": "sample", "times": "1,1"},
        {"command": "sample", "times": "2,1"},
        {"command": "convolve", "s": "1"},
        {"command": "convolve", "s": "1", "t": "1", "theta": "1/2"},
        {"command": "verify", "suite": "reversal", "eta": "0.5", "theta": "0.3"},
        {"command": "verify", "suite": "semigroup", "eta": "0.5", "theta": "0.5"},
        {"command": "verify", "order": 0},
        {"command": "verify", "parallel": 0},
        {"command": "verify", "suite": "everything"},
        {"command": "plot"},
    ],
)
def test_invalid_runs_are_rejected(kwargs):
    with pytest.raises(ValidationError):
        RunConfig(**kwargs)


def test_suite_all_accepts_any_valid_params():
    config = RunConfig(command="verify", eta="0.5", theta="0.3")
    assert config.has_params


def test_config_is_frozen():
    config = RunConfig(command="verify")
    with pytest.raises(ValidationError):
        config.order = 3
