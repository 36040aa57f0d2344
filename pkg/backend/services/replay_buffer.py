from typing import List

import numpy as np

from models.agent import Experience
from utils.exceptions import InvalidCallError


class ReplayBuffer:
    """Fixed-size ring of experiences; the oldest entry is overwritten first"""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidCallError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.entries: List[Experience] = []
        self.cursor = 0

    def add(self, experience: Experience) -> None:
        if len(self.entries) < self.capacity:
            self.entries.append(experience)
        else:
            self.entries[self.cursor] = experience
        self.cursor = (self.cursor + 1) % self.capacity

    @property
    def is_full(self) -> bool:
        return len(self.entries) == self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Experience]:
        if not self.entries:
            raise InvalidCallError("cannot sample from an empty replay buffer")
        size = min(batch_size, len(self.entries))
        picks = rng.choice(len(self.entries), size=size, replace=False)
        return [self.entries[i] for i in picks]

    def oldest_first(self) -> List[Experience]:
        if not self.is_full:
            return list(self.entries)
        return self.entries[self.cursor:] + self.entries[: self.cursor]

    def __len__(self) -> int:
        return len(self.entries)
