"""
Runtime settings and per-command experiment parameters.

Settings come from the environment (a local .env is honoured). Experiment parameters
come from a key=value file, then command-line overrides, validated by pydantic models
that reject unknown keys.
"""

import os
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, ClassVar, Dict, List, Literal, Optional, Tuple, Type

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError

from lcentropy.core import as_fraction


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the key (and line)."""


def _int_list(value: Any) -> Any:
    if isinstance(value, str):
        return [int(item) for item in value.replace(";", ",").split(",") if item.strip()]
    return value


def _fraction(value: Any) -> Any:
    if isinstance(value, (str, int, float)):
        return as_fraction(value)
    return value


def _fraction_list(value: Any) -> Any:
    if isinstance(value, str):
        value = [item for item in value.replace(";", ",").split(",") if item.strip()]
    if isinstance(value, (list, tuple)):
        return [_fraction(item) for item in value]
    return value


IntList = Annotated[List[int], BeforeValidator(_int_list)]
Rational = Annotated[Fraction, BeforeValidator(_fraction)]
RationalList = Annotated[List[Fraction], BeforeValidator(_fraction_list)]


class Settings(BaseModel):
    log_level: str = "INFO"
    output_dir: str = "results"
    workers: int = Field(default=1, ge=1)


def load_settings() -> Settings:
    """Read LCENTROPY_* variables, loading a .env file first when present."""
    load_dotenv()
    return Settings(
        log_level=os.getenv("LCENTROPY_LOG_LEVEL", "INFO").upper(),
        output_dir=os.getenv("LCENTROPY_OUTPUT_DIR", "results"),
        workers=int(os.getenv("LCENTROPY_WORKERS", "1")),
    )


class CommandParams(BaseModel):
    """Keys shared by every command."""

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    stochastic: ClassVar[bool] = False

    seed: Optional[int] = None
    output: Optional[str] = None

    def needs_seed(self) -> bool:
        return self.stochastic


class SystemParams(CommandParams):
    """Selects the dynamical system whose trajectory is analysed."""

    system: Literal["bernoulli", "grillenberger", "tent", "logistic", "countable_piece", "identity"] = "bernoulli"
    pi: str = "1/2,1/2"
    p: int = Field(default=3, ge=2)
    x0: Optional[Rational] = None
    alpha: Optional[float] = None
    lambda_target: float = 1.0
    piece_count: int = Field(default=1, ge=1)
    horizon: int = Field(default=64, ge=1)
    step: int = Field(default=1, ge=1)
    method: Literal["auto", "fast", "naive"] = "auto"

    def needs_seed(self) -> bool:
        if self.system == "bernoulli":
            return True
        return self.system not in ("grillenberger", "identity") and self.x0 is None


class CorrsumParams(SystemParams):
    eps: RationalList = Field(default_factory=lambda: [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)])
    m: IntList = Field(default_factory=lambda: [1, 2, 3])
    n: IntList = Field(default_factory=lambda: [1000])
    dump_orbit: bool = False


class EntropyParams(SystemParams):
    n: int = Field(default=100_000, ge=1)
    m: IntList = Field(default_factory=lambda: list(range(1, 13)))
    eps_k_min: int = 1
    eps_k_max: int = 6
    eps_scale: Rational = Fraction(1)
    tolerance: float = 0.05
    tail_fraction: float = 0.5
    min_recurrences: int = 3


class DimensionParams(SystemParams):
    n: int = Field(default=20_000, ge=1)
    eps: RationalList = Field(default_factory=lambda: [Fraction(1, 8), Fraction(1, 16), Fraction(1, 32), Fraction(1, 64)])
    tail_fraction: float = 0.5


class TheoremAParams(CommandParams):
    stochastic: ClassVar[bool] = True

    pi: str = "1/2,1/2"
    k: IntList = Field(default_factory=lambda: [2, 3])
    n: int = Field(default=100_000, ge=1)
    m: IntList = Field(default_factory=lambda: list(range(1, 7)))
    eps_k_min: int = 1
    eps_k_max: int = 6
    horizon: int = Field(default=64, ge=1)


class TheoremBParams(CommandParams):
    stochastic: ClassVar[bool] = True

    samples: int = Field(default=20, ge=1)
    n: int = Field(default=5000, ge=1)
    m: IntList = Field(default_factory=lambda: list(range(1, 7)))
    grid_size: int = Field(default=4000, ge=1000)
    lambda_target: float = 1.0
    piece_counts: IntList = Field(default_factory=lambda: [1, 2, 4])
    countable_samples: int = Field(default=8, ge=1)


class TheoremCParams(CommandParams):
    p: int = Field(default=3, ge=3)
    prefix_length: int = Field(default=100_000, ge=1)
    n_list: IntList = Field(default_factory=lambda: [3, 24, 100, 500])
    m: IntList = Field(default_factory=lambda: list(range(1, 13)))
    eps_k_min: int = 1
    eps_k_max: int = 6
    large_m: IntList = Field(default_factory=lambda: [1000, 2000, 3000, 4000])
    control_seed: int = 0
    entropy_ceiling: float = 0.05
    slack: float = 0.05


class GrillenbergerParams(CommandParams):
    action: Literal["levels", "dump", "report"] = "levels"
    p: int = Field(default=3, ge=2)
    length: int = Field(default=18_000, ge=1)
    explicit_cap: int = 10 ** 4
    factorial_cap: int = 10 ** 4
    j_max: Optional[int] = None
    allow_p2: bool = False


class GraphsParams(CommandParams):
    action: Literal["verify"] = "verify"
    max_n: int = Field(default=7, ge=2, le=8)
    max_k: int = Field(default=4, ge=2)


class BernoulliParams(CommandParams):
    pi: str = "1/2,1/4,1/4"
    closed_form: bool = False
    n: int = Field(default=100_000, ge=1)
    m: IntList = Field(default_factory=lambda: list(range(1, 13)))
    eps_k_min: int = 1
    eps_k_max: int = 6
    horizon: int = Field(default=64, ge=1)

    def needs_seed(self) -> bool:
        return not self.closed_form


class VerifyParams(CommandParams):
    stochastic: ClassVar[bool] = True

    cases: int = Field(default=1000, ge=1)
    graphs_max_n: int = Field(default=6, ge=2, le=8)


COMMANDS: Dict[str, Type[CommandParams]] = {
    "corrsum": CorrsumParams,
    "entropy": EntropyParams,
    "dimension": DimensionParams,
    "theorem-a": TheoremAParams,
    "theorem-b": TheoremBParams,
    "theorem-c": TheoremCParams,
    "grillenberger": GrillenbergerParams,
    "graphs": GraphsParams,
    "bernoulli": BernoulliParams,
    "verify": VerifyParams,
}


def read_config_file(path: str) -> Tuple[Dict[str, str], Dict[str, int]]:
    """key=value pairs of a config file and the line each key was set on."""
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {key.strip().replace("-", "_"): value for key, value in dotenv_values(file).items() if value is not None}
    lines = {}
    for number, line in enumerate(file.read_text().splitlines(), start=1):
        key, sep, _ = line.partition("=")
        key = key.strip().replace("-", "_")
        if sep and key and not key.startswith("#"):
            lines[key] = number
    return values, lines


def build_params(
    command: str,
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    lines: Optional[Dict[str, int]] = None,
) -> CommandParams:
    """Merge file values and overrides (overrides win) into the command's model."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    merged = {**(file_values or {}), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    try:
        params = COMMANDS[command].model_validate(merged)
    except ValidationError as e:
        problems = []
        for error in e.errors():
            key = ".".join(str(part) for part in error["loc"]) or "<config>"
            where = f" (line {lines[key]})" if lines and key in lines and key not in (overrides or {}) else ""
            problems.append(f"{key}{where}: {error['msg']}")
        raise ConfigError("; ".join(problems)) from e
    if params.needs_seed() and params.seed is None:
        raise ConfigError(f"seed: required for stochastic command {command!r}")
    return params


def parse_assignments(items: List[str]) -> Dict[str, str]:
    """--set key=value pairs."""
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out
