"""
Scheduler agent configuration and replay types
"""

from dataclasses import dataclass
from typing import List

import numpy as np
from pydantic import Field, model_validator

from models.world import StrictModel

MAX_ENUMERABLE_TERMINALS = 12


class AgentConfig(StrictModel):
    gamma: float = Field(0.9, ge=0, lt=1)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_min: float = Field(0.05, ge=0, le=1)
    epsilon_decay: float = Field(0.995, gt=0, le=1)
    learning_rate: float = Field(0.01, gt=0)
    batch_size: int = Field(64, ge=1)
    buffer_capacity: int = Field(2000, ge=1)
    target_sync_period: int = Field(100, ge=1)
    base_reward: float = Field(10.0, gt=0)
    hidden_sizes: List[int] = [128, 128]
    reward_scale: float = Field(0.001, gt=0)

    @model_validator(mode="after")
    def check_epsilon(self):
        if self.epsilon_min > self.epsilon_start:
            raise ValueError("epsilon_min must not exceed epsilon_start")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size must not exceed buffer_capacity")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes entries must be positive")
        return self


@dataclass(frozen=True)
class SchedulerState:
    """Raw server observation: per-terminal request sizes and priorities plus rho"""

    sizes: np.ndarray
    priorities: np.ndarray
    rho: float

    @property
    def num_terminals(self) -> int:
        return len(self.sizes)

    @property
    def request_mask(self) -> int:
        """Bit m is set when terminal m sent a request"""
        mask = 0
        for m, size in enumerate(self.sizes):
            if size > 0:
                mask |= 1 << m
        return mask

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.sizes, self.priorities, [self.rho]]).astype(np.float64)


@dataclass(frozen=True)
class ActionVector:
    bits: tuple

    @classmethod
    def from_index(cls, index: int, num_terminals: int) -> "ActionVector":
        return cls(tuple((index >> m) & 1 for m in range(num_terminals)))

    @property
    def index(self) -> int:
        return sum(bit << m for m, bit in enumerate(self.bits))


@dataclass(frozen=True)
class Experience:
    state: SchedulerState
    action: int
    reward: float
    next_state: SchedulerState
