"""
Scheduling policy interface
What every per-server request scheduler exposes to the simulator
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

from models.agent import Experience, SchedulerState
from models.domain import BitQueue
from models.world import ServerProfile


@dataclass(frozen=True)
class ServerView:
    """Read-only snapshot of a server at scheduling time"""

    server_id: int
    profile: ServerProfile
    task_queue: BitQueue
    slot_s: float


class SchedulingPolicy(ABC):
    name: str = "policy"

    @abstractmethod
    def schedule(self, state: SchedulerState, view: ServerView) -> int:
        """Return the index of the accepted-request bit vector"""

    def record(self, experience: Experience) -> None:
        """Offer one completed transition; non-learning policies ignore it"""

    def learn(self) -> Optional[float]:
        """Run at most one training step; returns its loss when one ran"""
        return None
