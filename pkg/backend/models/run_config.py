"""
Validated configuration of one command-line run.

Numbers arrive as strings ("1/3", "0.25", "2") and are parsed in the field
selected by ``mode`` only after validation, so an exact run never sees a
binary float.
"""

from enum import Enum
from pathlib import Path
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from backend.services.recurrences import ProcessParams, require_times
from backend.utils.scalars import Scalar, ScalarMode, parse_scalar
from config import settings


class Command(str, Enum):
    DESCRIBE = "describe"
    SUPPORT_PLOT = "support-plot"
    VERIFY = "verify"
    SAMPLE = "sample"
    CONVOLVE = "convolve"


class Suite(str, Enum):
    IDENTITIES = "identities"
    CHAPMAN = "chapman"
    MARTINGALE = "martingale"
    HARNESS = "harness"
    REVERSAL = "reversal"
    SEMIGROUP = "semigroup"
    ALL = "all"


class RunConfig(BaseModel):
    """One CLI invocation; validators enforce the preconditions of the command."""

    model_config = ConfigDict(frozen=True)

    command: Command
    eta: Optional[str] = None
    theta: Optional[str] = None
    t: Optional[str] = None
    s: Optional[str] = None
    u: Optional[str] = None
    times: Optional[str] = None
    order: int = Field(default_factory=lambda: settings.DEFAULT_ORDER, ge=1)
    deg: int = Field(default_factory=lambda: settings.DEFAULT_DEG, ge=0)
    n: int = Field(default=1, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0)
    mode: ScalarMode = ScalarMode.FLOAT
    out: Optional[Path] = None
    suite: Suite = Suite.ALL
    parallel: int = Field(default_factory=lambda: settings.MAX_CONCURRENT_VERIFICATION, ge=1)

    @field_validator("eta", "theta", "t", "s", "u")
    @classmethod
    def check_number(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            parse_scalar(value, ScalarMode.EXACT)
        return value

    @field_validator("times")
    @classmethod
    def check_times(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            for item in value.split(","):
                parse_scalar(item, ScalarMode.EXACT)
        return value

    @model_validator(mode="after")
    def check_command(self) -> "RunConfig":
        params = self.params  # raises when 1 + eta*theta < 0
        if self.command == Command.DESCRIBE:
            self.require("t")
            require_times(self.number("t"), allow_zero_start=False)
        elif self.command == Command.SUPPORT_PLOT:
            if self.t is not None:
                require_times(self.number("t"), allow_zero_start=False)
        elif self.command == Command.SAMPLE:
            self.require("times")
            require_times(*self.time_list, allow_zero_start=False)
        elif self.command == Command.CONVOLVE:
            self.require("s")
            self.require("t")
            require_times(self.number("s"), allow_zero_start=False)
            require_times(self.number("t"), allow_zero_start=False)
            if params.theta != 1:
                raise ValueError(f"convolve needs theta = 1, got theta={params.theta}")
        elif self.command == Command.VERIFY:
            if self.suite == Suite.REVERSAL and self.has_params and params.eta != params.theta:
                raise ValueError(
                    f"the reversal suite needs eta = theta, got eta={params.eta}, theta={params.theta}"
                )
            if self.suite == Suite.SEMIGROUP and self.has_params and params.theta != 1:
                raise ValueError(f"the semigroup suite needs theta = 1, got theta={params.theta}")
        return self

    def require(self, name: str):
        if getattr(self, name) is None:
            raise ValueError(f"{self.command.value} needs --{name}")

    def number(self, name: str) -> Scalar:
        return parse_scalar(getattr(self, name), self.mode)

    def optional_number(self, name: str, default: Any) -> Scalar:
        value = getattr(self, name)
        return parse_scalar(value if value is not None else str(default), self.mode)

    @property
    def has_params(self) -> bool:
        """Whether the run pins (eta, theta) instead of using built-in grids."""
        return self.eta is not None or self.theta is not None

    @property
    def params(self) -> ProcessParams:
        return ProcessParams.from_values(self.eta or "0", self.theta or "0", self.mode)

    @property
    def time_list(self) -> List[Scalar]:
        if self.times is None:
            return []
        return [parse_scalar(item, self.mode) for item in self.times.split(",")]
