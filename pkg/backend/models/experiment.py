"""
Experiment specification
The JSON file handed to the CLI, validated with pydantic
"""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import Field, ValidationError, model_validator

from models.agent import AgentConfig
from models.world import StrictModel, WorldConfig
from utils.config import settings
from utils.exceptions import ConfigError


class PolicyTag(str, Enum):
    R_DDQN = "r_ddqn"
    DQN = "dqn"
    EXHAUSTIVE = "exhaustive"
    ACCEPT_ALL = "accept_all"
    LOCAL_ONLY = "local_only"

    @property
    def learned(self) -> bool:
        return self in (PolicyTag.R_DDQN, PolicyTag.DQN)


class PolicyKind(StrictModel):
    tag: PolicyTag = PolicyTag.R_DDQN
    depth: int = Field(1, ge=1)


class SweepAxis(StrictModel):
    axis: Literal["terminals", "speed"]
    values: List[float] = Field(min_length=1)


class HyperSweep(StrictModel):
    axis: Literal["learning_rate", "batch_size"]
    values: List[float] = Field(min_length=1)


class ExperimentSpec(StrictModel):
    schema_version: Literal[1] = 1
    world: WorldConfig = WorldConfig()
    agent: AgentConfig = AgentConfig()
    policy: PolicyKind = PolicyKind()
    seed: int = settings.DEFAULT_SEED
    episodes: int = Field(200, ge=0)
    eval_seeds: int = Field(10, ge=1)
    train_seeds: int = Field(1, ge=1)
    sweep: Optional[SweepAxis] = None
    hyper_sweep: Optional[HyperSweep] = None
    compare_policies: List[PolicyTag] = [PolicyTag.R_DDQN, PolicyTag.DQN, PolicyTag.EXHAUSTIVE]
    train_missing: bool = False
    checkpoint_dir: str = settings.CHECKPOINT_DIR
    output_dir: str = settings.OUTPUT_DIR

    @model_validator(mode="after")
    def check_terminal_sweep(self):
        if self.sweep and self.sweep.axis == "terminals":
            if any(v < 1 or v != int(v) for v in self.sweep.values):
                raise ValueError("terminal sweep values must be positive integers")
        return self

    def config_hash(self) -> str:
        """sha256 over the canonical JSON form; output paths are excluded"""
        payload = self.model_dump(mode="json", by_alias=True, exclude={"output_dir", "checkpoint_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolved_checkpoint_dir(self) -> Path:
        """Where learned policies are saved and loaded, shared with the HTTP surface"""
        return Path(self.checkpoint_dir)


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ()))


def parse_spec(data: Union[dict, str]) -> ExperimentSpec:
    """
    Validate raw configuration into an ExperimentSpec

    Raises:
        ConfigError: naming the first offending field path
    """
    try:
        if isinstance(data, str):
            return ExperimentSpec.model_validate_json(data)
        return ExperimentSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first.get("msg", "invalid value"), field_path=_field_path(first)) from e


def load_spec(path: Union[str, Path]) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_spec(path.read_text(encoding="utf-8"))
