"""
Domain types shared by the cost model, the schedulers and the simulator
"""

from collections import deque
from dataclasses import dataclass
from typing import Deque, Iterable, Iterator, List, NamedTuple, Optional, Tuple

from utils.exceptions import InvalidInputError


@dataclass(frozen=True)
class TaskSpec:
    """One indivisible task; target_server is set once a server accepts it"""

    id: int
    size_bits: float
    priority: float
    created_slot: int
    owner: int
    target_server: Optional[int] = None

    def __post_init__(self):
        if self.size_bits <= 0:
            raise InvalidInputError(f"task {self.id}: size_bits must be positive, got {self.size_bits}")
        if self.priority <= 0:
            raise InvalidInputError(f"task {self.id}: priority must be positive, got {self.priority}")


@dataclass(frozen=True)
class CostPair:
    delay_s: float
    energy_j: float


class DrainResult(NamedTuple):
    processed: List[TaskSpec]
    xi: int
    consumed_bits: float


class BitQueue:
    """
    FIFO of tasks with a cached bit total

    total_bits always equals the sum of size_bits over the entries.
    head_done_bits is the progress already made on the head task (bits
    processed, or bits transmitted for an offloading queue); it is reset
    whenever the head is popped.
    """

    def __init__(self, entries: Iterable[TaskSpec] = ()):
        self._entries: Deque[TaskSpec] = deque()
        self.total_bits: float = 0
        self.head_done_bits: float = 0.0
        for task in entries:
            self.push(task)

    def push(self, task: TaskSpec) -> None:
        self._entries.append(task)
        self.total_bits += task.size_bits

    def pop(self) -> TaskSpec:
        task = self._entries.popleft()
        self.total_bits -= task.size_bits
        self.head_done_bits = 0.0
        return task

    def peek(self) -> Optional[TaskSpec]:
        return self._entries[0] if self._entries else None

    @property
    def entries(self) -> Tuple[TaskSpec, ...]:
        return tuple(self._entries)

    @property
    def pending_bits(self) -> float:
        """Bits still to be served, excluding head progress"""
        return self.total_bits - self.head_done_bits

    def copy(self) -> "BitQueue":
        clone = BitQueue(self._entries)
        clone.head_done_bits = self.head_done_bits
        return clone

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TaskSpec]:
        return iter(self._entries)

    def __repr__(self) -> str:
        sizes = [t.size_bits for t in self._entries]
        return f"BitQueue(sizes={sizes}, head_done_bits={self.head_done_bits})"


@dataclass
class QueueSnapshot:
    """What a server broadcasts at slot start"""

    server_id: int
    queue_bits: float
    rho: float
    uploaders_last_slot: int = 0
