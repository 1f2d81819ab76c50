"""
Experiment Configuration
========================
Validated experiment settings with layered loading:

    built-in defaults <- JSON file (--config or STABLEPATH_CONFIG)
                      <- STABLEPATH_SEED <- command-line overrides

``.env`` files in the working directory are honored through python-dotenv.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import structlog
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ArtifactFormatError
from .mobility import RwmParams, Territory
from .seeding import derive_seed

logger = structlog.get_logger(__name__)

CONFIG_ENV_VAR = "STABLEPATH_CONFIG"
SEED_ENV_VAR = "STABLEPATH_SEED"

POLICIES = ("stable", "shortest")


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class RwmSettings(_Settings):
    width: float = Field(1000.0, gt=0)
    height: float = Field(1000.0, gt=0)
    depth: Optional[float] = Field(None, gt=0)
    v_min: float = Field(0.0, ge=0)
    v_max: float = Field(20.0, ge=0)
    pause_max: float = Field(20.0, ge=0)
    duration: float = Field(4000.0, gt=0)
    sample_interval: float = Field(10.0, gt=0)
    sample_count: int = Field(400, ge=1)

    @model_validator(mode="after")
    def _check_speeds(self) -> "RwmSettings":
        if self.v_min > self.v_max:
            raise ValueError(f"v_min ({self.v_min}) must not exceed v_max ({self.v_max})")
        return self

    def territory(self) -> Territory:
        return Territory.from_size(self.width, self.height, self.depth)

    def params(self, rng_seed: int) -> RwmParams:
        return RwmParams(self.territory(), self.v_min, self.v_max, self.pause_max, self.duration, rng_seed)


class NetSettings(_Settings):
    n_input: int = Field(8, ge=1)
    n_hidden: int = Field(5, ge=1)
    n_feedback: Optional[int] = Field(None, ge=1)
    horizon: int = Field(3, ge=1)
    learning_rate: float = Field(0.05, gt=0)
    epochs: int = Field(500, ge=0)
    margin: float = Field(0.1, ge=0, lt=0.5)


class GridSettings(_Settings):
    n_input_range: Tuple[int, int] = (4, 12)
    n_hidden_range: Tuple[int, int] = (3, 8)
    series_count: int = Field(10, ge=1)
    series_length: int = Field(400, ge=2)
    epochs: int = Field(100, ge=0)
    learning_rate: float = Field(0.1, gt=0)
    max_workers: int = Field(1, ge=1)

    @field_validator("n_input_range", "n_hidden_range")
    @classmethod
    def _check_range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        lo, hi = value
        if lo < 1 or hi < lo:
            raise ValueError(f"range must satisfy 1 <= low <= high, got {value}")
        return value


class RoutingSettings(_Settings):
    transmission_range: float = Field(250.0, gt=0)
    policies: List[str] = Field(default_factory=lambda: list(POLICIES))
    max_hops: Optional[int] = Field(None, ge=1)
    parallel: bool = False

    @field_validator("policies")
    @classmethod
    def _check_policies(cls, value: List[str]) -> List[str]:
        unknown = [p for p in value if p not in POLICIES]
        if unknown or not value:
            raise ValueError(f"policies must be a non-empty subset of {POLICIES}, got {value}")
        return value


class ExperimentConfig(_Settings):
    """Everything one experiment run needs, seeded from ``seed``."""
    seed: int = 0
    split: int = Field(200, ge=1)
    rwm: RwmSettings = Field(default_factory=RwmSettings)
    net: NetSettings = Field(default_factory=NetSettings)
    grid: GridSettings = Field(default_factory=GridSettings)
    routing: RoutingSettings = Field(default_factory=RoutingSettings)

    def component_seed(self, component: str) -> int:
        return derive_seed(self.seed, component)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        """Return a copy with dotted-key overrides applied (``None`` values skipped)."""
        data = self.model_dump()
        for dotted, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = dotted.split(".")
            for part in parents:
                target = target[part]
            target[leaf] = value
        return ExperimentConfig.model_validate(data)


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactFormatError(f"config file {path} is not valid JSON: {e}") from e


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Load the layered experiment configuration."""
    load_dotenv()

    if path is None and os.getenv(CONFIG_ENV_VAR):
        path = Path(os.environ[CONFIG_ENV_VAR])

    if path is not None:
        config = ExperimentConfig.model_validate(_read_json(Path(path)))
        logger.debug("config_loaded", path=str(path))
    else:
        config = ExperimentConfig()

    env_seed = os.getenv(SEED_ENV_VAR)
    if env_seed is not None:
        config = config.with_overrides({"seed": int(env_seed)})

    if overrides:
        config = config.with_overrides(overrides)
    return config
