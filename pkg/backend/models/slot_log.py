from typing import List, Optional

from pydantic import BaseModel


class SlotLog(BaseModel):
    """Everything that happened in one slot; serialised one JSON object per line"""

    slot: int
    terminal_xi: List[int]
    terminal_priorities: List[List[float]]
    server_xi: List[int]
    server_priorities: List[List[float]]
    decisions: List[Optional[int]]
    chosen_servers: List[Optional[int]]
    accepted: List[Optional[bool]]
    rewards: List[float]
    train_losses: List[Optional[float]]
    server_queue_bits: List[float]
    out_of_coverage: List[int]
    stalled_uploads: List[int]
    generated_bits: float
    completed_bits: float

    @property
    def priority_sum(self) -> float:
        return sum(sum(p) for p in self.terminal_priorities) + sum(sum(p) for p in self.server_priorities)
