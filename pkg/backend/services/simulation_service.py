"""
Simulation Service
The discrete-time world: mobility, coverage, channel, task generation and
the per-slot offloading protocol
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from models.agent import Experience, SchedulerState
from models.domain import BitQueue, QueueSnapshot, TaskSpec
from models.slot_log import SlotLog
from models.world import RadioParams, ServerProfile, TerminalProfile, WorldConfig
from services.cost_model import (
    achievable_rate,
    drain_queue_one_slot,
    local_cost,
    offload_cost,
    remaining_resources,
    slot_capacity_bits,
)
from services.decision_service import Candidate, OffloadDecision, evaluate_benefit, mobility_alpha, plan_offload
from services.rl_scheduler import encode_state, evaluate_reward
from services.scheduling_policy import SchedulingPolicy, ServerView
from utils.exceptions import CapacityViolationError, ConservationError, InvalidCallError

HEADINGS: Dict[str, Tuple[int, int]] = {
    "east": (1, 0),
    "west": (-1, 0),
    "north": (0, 1),
    "south": (0, -1),
}
HEADING_ORDER = ("east", "west", "south", "north")
_MIRROR_X = {"east": "west", "west": "east"}
_MIRROR_Y = {"north": "south", "south": "north"}

StageOne = Callable[[Sequence[Candidate], float], OffloadDecision]


@dataclass
class TerminalState:
    id: int
    x: float
    y: float
    speed_mps: float
    heading: str
    profile: TerminalProfile
    comp_queue: BitQueue = field(default_factory=BitQueue)
    tran_queue: BitQueue = field(default_factory=BitQueue)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)


@dataclass
class ServerState:
    id: int
    x: float
    y: float
    profile: ServerProfile
    agent: SchedulingPolicy
    task_queue: BitQueue = field(default_factory=BitQueue)
    uploaders_last_slot: int = 0
    pending: Optional[Tuple[SchedulerState, int, float]] = None

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    @property
    def queue_bits(self) -> float:
        return self.task_queue.pending_bits


# Geometry and channel

def distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def channel_gain(distance_m: float, radio: RadioParams) -> float:
    """Deterministic path loss, clamped to the 1 m reference distance"""
    return radio.reference_gain * max(distance_m, 1.0) ** (-radio.pathloss_exponent)


def _fold(coord: float, upper: float) -> Tuple[float, bool]:
    """Reflect a coordinate into [0, upper]; True when it ends up mirrored"""
    period = 2.0 * upper
    raw = coord % period
    if raw > upper:
        return period - raw, True
    return raw, False


def advance_position(
    x: float, y: float, heading: str, step_m: float, width: float, height: float
) -> Tuple[float, float, str]:
    dx, dy = HEADINGS[heading]
    x, flip_x = _fold(x + dx * step_m, width)
    y, flip_y = _fold(y + dy * step_m, height)
    if flip_x:
        heading = _MIRROR_X.get(heading, heading)
    if flip_y:
        heading = _MIRROR_Y.get(heading, heading)
    return x, y, heading


def step_mobility(term: TerminalState, config: WorldConfig, rng: Optional[np.random.Generator] = None) -> TerminalState:
    """
    Move a terminal through one slot

    With an rng the heading and speed are first resampled (uniform over the
    four axis directions and the configured speed range); without one the
    current heading and speed are kept. Walls reflect. Mutates and returns term.
    """
    if rng is not None:
        term.heading = HEADING_ORDER[int(rng.integers(len(HEADING_ORDER)))]
        term.speed_mps = float(rng.uniform(config.mobility.speed_min_mps, config.mobility.speed_max_mps))
    term.x, term.y, term.heading = advance_position(
        term.x, term.y, term.heading, term.speed_mps * config.slot_s, config.arena_width_m, config.arena_height_m
    )
    return term


def predict_position(term: TerminalState, config: WorldConfig) -> Tuple[float, float]:
    """Dead-reckon the current velocity one slot ahead"""
    x, y, _ = advance_position(
        term.x, term.y, term.heading, term.speed_mps * config.slot_s, config.arena_width_m, config.arena_height_m
    )
    return x, y


def importance_metric(logs: Iterable[SlotLog], total_slots: int) -> float:
    """Average over T slots of the priorities of every task finished in the slot"""
    if total_slots < 1:
        raise InvalidCallError(f"total_slots must be at least 1, got {total_slots}")
    return sum(log.priority_sum for log in logs) / total_slots


# Output formats

def write_slot_logs(logs: Iterable[SlotLog], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for log in logs:
            f.write(log.model_dump_json() + "\n")
    return path


def run_summary_frame(logs: Sequence[SlotLog]) -> pd.DataFrame:
    """One row per slot: per-server reward, running I, per-server queue length"""
    rows = []
    running = 0.0
    for log in logs:
        running += log.priority_sum
        row = {"slot": log.slot}
        row.update({f"reward_e{n}": r for n, r in enumerate(log.rewards)})
        row["I_to_date"] = running / log.slot
        row.update({f"queue_e{n}": q for n, q in enumerate(log.server_queue_bits)})
        rows.append(row)
    return pd.DataFrame(rows)


# World

class World:
    """
    One episode of the multi-server system

    Slots run strictly in order; within a slot the commit order is mobility
    and broadcast, generation, stage-one decisions, server scheduling,
    queue drains, logging.
    """

    def __init__(
        self,
        config: WorldConfig,
        policies: Sequence[SchedulingPolicy],
        seed: Union[int, Sequence[int]] = 0,
        base_reward: float = 10.0,
        stage_one: StageOne = plan_offload,
        check_invariants: bool = True,
    ):
        if len(policies) != config.num_servers:
            raise InvalidCallError(f"{len(policies)} policies given for {config.num_servers} servers")
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.base_reward = base_reward
        self.stage_one = stage_one
        self.check_invariants = check_invariants

        self.slot = 0
        self.next_task_id = 0
        self.generated_bits = 0
        self.completed_bits = 0
        self.logs: List[SlotLog] = []

        self.servers = [
            ServerState(id=n, x=float(x), y=float(y), profile=config.server_profile, agent=policy)
            for n, ((x, y), policy) in enumerate(zip(config.server_positions, policies))
        ]
        self.terminals = [self._spawn_terminal(m) for m in range(config.num_terminals)]
        self.terminal_capacity = slot_capacity_bits(config.terminal_profile, config.slot_s)
        self.server_capacity = slot_capacity_bits(config.server_profile, config.slot_s)

    def _spawn_terminal(self, m: int) -> TerminalState:
        cfg = self.config
        return TerminalState(
            id=m,
            x=float(self.rng.uniform(0.0, cfg.arena_width_m)),
            y=float(self.rng.uniform(0.0, cfg.arena_height_m)),
            speed_mps=float(self.rng.uniform(cfg.mobility.speed_min_mps, cfg.mobility.speed_max_mps)),
            heading=HEADING_ORDER[int(self.rng.integers(len(HEADING_ORDER)))],
            profile=cfg.terminal_profile,
        )

    def covers(self, server: ServerState, position: Tuple[float, float]) -> bool:
        return distance(position, server.position) <= server.profile.coverage_radius_m

    def broadcast(self) -> Dict[int, QueueSnapshot]:
        return {
            s.id: QueueSnapshot(
                server_id=s.id,
                queue_bits=s.queue_bits,
                rho=remaining_resources(s.profile, s.queue_bits, self.config.slot_s),
                uploaders_last_slot=s.uploaders_last_slot,
            )
            for s in self.servers
        }

    def _generate(self, t: int) -> Dict[int, TaskSpec]:
        gen = self.config.task_gen
        tasks = {}
        for term in self.terminals:
            if self.rng.random() >= gen.p_gen:
                continue
            size = int(self.rng.integers(gen.size_min_bits, gen.size_max_bits + 1))
            priority = int(self.rng.integers(gen.priority_min, gen.priority_max + 1))
            tasks[term.id] = TaskSpec(id=self.next_task_id, size_bits=size, priority=priority, created_slot=t, owner=term.id)
            self.next_task_id += 1
            self.generated_bits += size
        return tasks

    def _candidates(
        self, term: TerminalState, task: TaskSpec, covering: List[ServerState], snapshots: Dict[int, QueueSnapshot]
    ) -> List[Candidate]:
        cfg = self.config
        local = local_cost(term.profile, term.comp_queue.pending_bits, task.size_bits)
        next_pos = predict_position(term, cfg)
        candidates = []
        for server in covering:
            snap = snapshots[server.id]
            d_now = distance(term.position, server.position)
            radio = cfg.radio.with_bandwidth(cfg.radio.bandwidth_hz / max(1, snap.uploaders_last_slot))
            rate = achievable_rate(radio, term.profile.p_tran, channel_gain(d_now, cfg.radio))
            if rate <= 0:
                continue
            offload = offload_cost(
                term.profile, term.tran_queue.pending_bits, task.size_bits, rate, server.profile, snap.queue_bits
            )
            candidates.append(
                Candidate(
                    server_id=server.id,
                    d_now_m=d_now,
                    d_next_m=distance(next_pos, server.position),
                    benefit=evaluate_benefit(local, offload, cfg.lambda_),
                )
            )
        return candidates

    def _upload(self, uploaders: List[int]) -> Tuple[Dict[int, List[TaskSpec]], List[int]]:
        """
        Spend each terminal's slot of airtime on its offloading queue

        A terminal sends to one server per slot, the one its head task targeted
        when uploaders were counted; a later task for another server waits.
        """
        cfg = self.config
        radios = [cfg.radio.with_bandwidth(cfg.radio.bandwidth_hz / max(1, k)) for k in uploaders]
        arrivals: Dict[int, List[TaskSpec]] = {s.id: [] for s in self.servers}
        stalled = []
        for term in self.terminals:
            budget = cfg.slot_s
            slot_server = term.tran_queue.peek().target_server if len(term.tran_queue) else None
            while budget > 0 and len(term.tran_queue):
                head = term.tran_queue.peek()
                if head.target_server != slot_server:
                    break
                server = self.servers[head.target_server]
                d = distance(term.position, server.position)
                rate = achievable_rate(radios[server.id], term.profile.p_tran, channel_gain(d, cfg.radio))
                if d > server.profile.coverage_radius_m or rate <= 0:
                    stalled.append(term.id)
                    break
                need = (head.size_bits - term.tran_queue.head_done_bits) / rate
                if need <= budget:
                    budget -= need
                    arrivals[server.id].append(term.tran_queue.pop())
                else:
                    term.tran_queue.head_done_bits += rate * budget
                    budget = 0.0
        return arrivals, stalled

    def _check_capacity(self, where: str, consumed: float, capacity: float) -> None:
        if self.check_invariants and consumed > capacity * (1 + 1e-12):
            raise CapacityViolationError(f"{where} consumed {consumed} bits with capacity {capacity}")

    def in_flight_bits(self) -> float:
        return (
            sum(t.comp_queue.total_bits + t.tran_queue.total_bits for t in self.terminals)
            + sum(s.task_queue.total_bits for s in self.servers)
        )

    def audit_conservation(self) -> None:
        held = self.completed_bits + self.in_flight_bits()
        if not math.isclose(self.generated_bits, held, rel_tol=1e-12, abs_tol=1e-6):
            raise ConservationError(
                f"slot {self.slot}: generated {self.generated_bits} bits but completed+queued is {held}"
            )

    def run_slot(self, t: int) -> SlotLog:
        cfg = self.config
        if t != self.slot + 1 or t > cfg.total_slots:
            raise InvalidCallError(f"slot {t} requested after slot {self.slot} of {cfg.total_slots}")
        num_terminals = cfg.num_terminals
        generated_before, completed_before = self.generated_bits, self.completed_bits

        # mobility and broadcast
        for term in self.terminals:
            step_mobility(term, cfg, self.rng)
        snapshots = self.broadcast()

        # generation and stage-one decisions
        tasks = self._generate(t)
        decisions: List[Optional[int]] = [None] * num_terminals
        chosen: List[Optional[int]] = [None] * num_terminals
        out_of_coverage: List[int] = []
        requests: Dict[int, Dict[int, TaskSpec]] = {s.id: {} for s in self.servers}
        for m, task in tasks.items():
            term = self.terminals[m]
            covering = [s for s in self.servers if self.covers(s, term.position)]
            if not covering:
                out_of_coverage.append(m)
                decisions[m] = 0
                term.comp_queue.push(task)
                continue
            alpha = mobility_alpha(term.speed_mps, cfg.mobility.alpha0, cfg.mobility.v_ref_mps)
            decision = self.stage_one(self._candidates(term, task, covering, snapshots), alpha)
            decisions[m], chosen[m] = decision.d, decision.chosen_server
            if decision.d:
                requests[decision.chosen_server][m] = task
            else:
                term.comp_queue.push(task)

        # stage two: per-server scheduling, rewards, experiences
        accepted: List[Optional[bool]] = [None] * num_terminals
        rewards: List[float] = []
        losses: List[Optional[float]] = []
        for server in self.servers:
            state = encode_state(requests[server.id], snapshots[server.id].rho, num_terminals)
            if server.pending is not None:
                prev_state, prev_action, prev_reward = server.pending
                server.agent.record(Experience(prev_state, prev_action, prev_reward, state))

            view = ServerView(server.id, server.profile, server.task_queue, cfg.slot_s)
            action = server.agent.schedule(state, view)
            if action & ~state.request_mask:
                raise InvalidCallError(f"server {server.id} accepted terminals that sent no request (action {action})")
            reward = evaluate_reward(state, action, server.task_queue, server.profile, cfg.slot_s, self.base_reward)
            rewards.append(reward.total)
            server.pending = (state, action, reward.total)

            for m in sorted(requests[server.id]):
                task = requests[server.id][m]
                if (action >> m) & 1:
                    accepted[m] = True
                    self.terminals[m].tran_queue.push(replace(task, target_server=server.id))
                else:
                    accepted[m] = False
                    self.terminals[m].comp_queue.push(task)
            losses.append(server.agent.learn())

        # local processing
        terminal_xi, terminal_priorities = [], []
        for term in self.terminals:
            done = drain_queue_one_slot(term.comp_queue, self.terminal_capacity)
            self._check_capacity(f"terminal {term.id}", done.consumed_bits, self.terminal_capacity)
            terminal_xi.append(done.xi)
            terminal_priorities.append([float(task.priority) for task in done.processed])
            self.completed_bits += sum(task.size_bits for task in done.processed)

        # uploads, then server processing
        uploaders = [0] * len(self.servers)
        for term in self.terminals:
            head = term.tran_queue.peek()
            if head is not None and self.covers(self.servers[head.target_server], term.position):
                uploaders[head.target_server] += 1
        arrivals, stalled = self._upload(uploaders)

        server_xi, server_priorities = [], []
        for server in self.servers:
            for task in arrivals[server.id]:
                server.task_queue.push(task)
            done = drain_queue_one_slot(server.task_queue, self.server_capacity)
            self._check_capacity(f"server {server.id}", done.consumed_bits, self.server_capacity)
            server_xi.append(done.xi)
            server_priorities.append([float(task.priority) for task in done.processed])
            self.completed_bits += sum(task.size_bits for task in done.processed)
            server.uploaders_last_slot = uploaders[server.id]

        self.slot = t
        if self.check_invariants:
            self.audit_conservation()

        log = SlotLog(
            slot=t,
            terminal_xi=terminal_xi,
            terminal_priorities=terminal_priorities,
            server_xi=server_xi,
            server_priorities=server_priorities,
            decisions=decisions,
            chosen_servers=chosen,
            accepted=accepted,
            rewards=rewards,
            train_losses=losses,
            server_queue_bits=[s.queue_bits for s in self.servers],
            out_of_coverage=out_of_coverage,
            stalled_uploads=sorted(set(stalled)),
            generated_bits=self.generated_bits - generated_before,
            completed_bits=self.completed_bits - completed_before,
        )
        self.logs.append(log)
        logger.debug(
            f"slot {t}: requests={sum(len(r) for r in requests.values())} "
            f"rewards={[round(r, 3) for r in rewards]} queues={log.server_queue_bits}"
        )
        return log

    def run(self) -> List[SlotLog]:
        for t in range(self.slot + 1, self.config.total_slots + 1):
            self.run_slot(t)
        return self.logs

    def importance(self) -> float:
        return importance_metric(self.logs, self.config.total_slots)


def run_slot(world: World, t: int) -> SlotLog:
    return world.run_slot(t)
