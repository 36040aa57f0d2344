"""
RL Scheduler
Per-server double-DQN agent that accepts or rejects the offloading requests
received in a slot

The joint action is a bit vector over terminals; action index a accepts
terminal m iff bit m of a is set. All 2^M joint actions are network outputs,
so M is limited to MAX_ENUMERABLE_TERMINALS.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel

from models.agent import MAX_ENUMERABLE_TERMINALS, ActionVector, AgentConfig, Experience, SchedulerState
from models.domain import BitQueue, TaskSpec
from models.world import ServerProfile
from services.cost_model import preview_drain, slot_capacity_bits
from services.q_network import QNetwork
from services.replay_buffer import ReplayBuffer
from services.scheduling_policy import SchedulingPolicy, ServerView
from utils.exceptions import (
    CheckpointError,
    CombinatorialLimitError,
    ConfigError,
    InvalidCallError,
    InvalidInputError,
    InvalidRequestError,
)

CHECKPOINT_MAGIC = b"MECQNET1\n"

Seed = Union[int, Sequence[int]]


def check_enumerable(num_terminals: int) -> None:
    if num_terminals > MAX_ENUMERABLE_TERMINALS:
        raise CombinatorialLimitError(
            f"{num_terminals} terminals give 2^{num_terminals} joint actions; "
            f"at most {MAX_ENUMERABLE_TERMINALS} terminals are supported"
        )


# State encoding

def encode_state(requests: Mapping[int, TaskSpec], rho: float, num_terminals: int) -> SchedulerState:
    sizes = np.zeros(num_terminals)
    priorities = np.zeros(num_terminals)
    for m, task in requests.items():
        if not 0 <= m < num_terminals:
            raise InvalidRequestError(f"request from terminal {m}, expected an index in [0, {num_terminals})")
        sizes[m] = task.size_bits
        priorities[m] = task.priority
    return SchedulerState(sizes=sizes, priorities=priorities, rho=float(rho))


def decode_requests(state: SchedulerState) -> dict:
    """{terminal: (size_bits, priority)} for every requesting terminal"""
    return {
        m: (float(state.sizes[m]), float(state.priorities[m]))
        for m in range(state.num_terminals)
        if state.sizes[m] > 0
    }


@dataclass(frozen=True)
class StateNormalizer:
    """Scales raw sizes and priorities before they reach a network.

    rho is unbounded below when a queue backs up, so the network sees
    rho / (1 + |rho|) in (-1, 1); the state itself keeps rho raw.
    """

    size_scale: float = 1.0
    priority_scale: float = 1.0

    def transform(self, state: SchedulerState) -> np.ndarray:
        return np.concatenate([
            state.sizes / self.size_scale,
            state.priorities / self.priority_scale,
            [state.rho / (1.0 + abs(state.rho))],
        ])

    def transform_batch(self, states: Sequence[SchedulerState]) -> np.ndarray:
        return np.stack([self.transform(s) for s in states])


UNSCALED = StateNormalizer()


# Action masking

def _feasible_bool(request_masks: np.ndarray, num_actions: int) -> np.ndarray:
    actions = np.arange(num_actions)
    return (actions[None, :] & ~np.asarray(request_masks)[:, None]) == 0


def feasible_mask(state: SchedulerState) -> np.ndarray:
    """Indices of the actions that only accept terminals that sent a request"""
    check_enumerable(state.num_terminals)
    allowed = _feasible_bool(np.array([state.request_mask]), 2 ** state.num_terminals)[0]
    return np.flatnonzero(allowed)


# Rewards

def task_reward(v_b: float, priority: float) -> float:
    if not v_b > 0:
        raise InvalidInputError(f"base reward must be positive, got {v_b}")
    return v_b * priority


def immediate_benefit(queue_after_accepts: BitQueue, slot_capacity: float, v_b: float) -> float:
    """v_b times the priorities of the tasks the server finishes this slot"""
    prefix = preview_drain(queue_after_accepts, slot_capacity)
    return sum(task.priority for task in prefix.processed) * v_b


def expected_benefit(per_terminal_rewards: Sequence[float], action: ActionVector, waiting_slots: int) -> float:
    if waiting_slots < 1:
        raise ConfigError(f"waiting slots must be at least 1, got {waiting_slots}")
    accepted = sum(r for r, bit in zip(per_terminal_rewards, action.bits) if bit)
    return accepted / waiting_slots


def waiting_slots(queue_bits: float, accepted_bits: float, server: ServerProfile, slot_s: float) -> int:
    """Backlog after acceptance, in whole slots, at least 1"""
    return max(1, math.ceil((queue_bits + accepted_bits) / slot_capacity_bits(server, slot_s)))


def slot_reward(c_r: float, e_r: float) -> float:
    return c_r + e_r


class RewardBreakdown(NamedTuple):
    immediate: float
    expected: float
    total: float
    waiting_slots: int


def accepted_tasks(state: SchedulerState, action_index: int) -> List[TaskSpec]:
    """Synthetic tasks for the accepted requests, in terminal order"""
    action = ActionVector.from_index(action_index, state.num_terminals)
    tasks = []
    for m, bit in enumerate(action.bits):
        if not bit:
            continue
        if state.sizes[m] <= 0:
            raise InvalidCallError(f"action {action_index} accepts terminal {m}, which sent no request")
        tasks.append(
            TaskSpec(id=-(m + 1), size_bits=float(state.sizes[m]), priority=float(state.priorities[m]),
                     created_slot=-1, owner=m)
        )
    return tasks


def evaluate_reward(
    state: SchedulerState,
    action_index: int,
    server_queue: BitQueue,
    server: ServerProfile,
    slot_s: float,
    v_b: float,
) -> RewardBreakdown:
    """Slot reward of accepting action_index on top of the current server queue"""
    action = ActionVector.from_index(action_index, state.num_terminals)
    accepted = accepted_tasks(state, action_index)

    queue_after = server_queue.copy()
    for task in accepted:
        queue_after.push(task)

    c_r = immediate_benefit(queue_after, slot_capacity_bits(server, slot_s), v_b)
    n_wait = waiting_slots(server_queue.pending_bits, sum(t.size_bits for t in accepted), server, slot_s)
    rewards = [task_reward(v_b, p) for p in state.priorities]
    e_r = expected_benefit(rewards, action, n_wait)
    return RewardBreakdown(immediate=c_r, expected=e_r, total=slot_reward(c_r, e_r), waiting_slots=n_wait)


# Action selection

def select_action(q_values: np.ndarray, mask: Sequence[int], epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the feasible actions; greedy ties go to the lowest index"""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError(f"epsilon must lie in [0, 1], got {epsilon}")
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return 0
    if rng.random() < epsilon:
        return int(rng.choice(mask))
    return int(mask[np.argmax(np.asarray(q_values)[mask])])


# Training

def compute_targets(
    batch: Sequence[Experience],
    q_eval: QNetwork,
    q_target: QNetwork,
    gamma: float,
    double: bool = True,
    normalizer: StateNormalizer = UNSCALED,
) -> np.ndarray:
    """
    Bootstrapped regression targets y = R + gamma * Q_target(s', A)

    With double=True, A is the feasible argmax of Q_eval(s'); otherwise it is
    the feasible argmax of Q_target(s') itself.
    """
    next_x = normalizer.transform_batch([e.next_state for e in batch])
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    masks = _feasible_bool(np.array([e.next_state.request_mask for e in batch]), q_target.num_actions)

    target_next = q_target.forward(next_x)
    chooser = q_eval.forward(next_x) if double else target_next
    best = np.argmax(np.where(masks, chooser, -np.inf), axis=1)
    return rewards + gamma * target_next[np.arange(len(batch)), best]


def td_train_step(
    batch: Sequence[Experience],
    q_eval: QNetwork,
    q_target: QNetwork,
    cfg: AgentConfig,
    double: bool = True,
    normalizer: StateNormalizer = UNSCALED,
) -> float:
    """One SGD step on the mean squared TD error; returns the loss before the update"""
    if not batch:
        raise InvalidCallError("training batch is empty")
    if q_eval.layer_sizes != q_target.layer_sizes:
        raise InvalidCallError(f"architecture mismatch: {q_eval.layer_sizes} vs {q_target.layer_sizes}")

    y = compute_targets(batch, q_eval, q_target, cfg.gamma, double=double, normalizer=normalizer)
    x = normalizer.transform_batch([e.state for e in batch])
    actions = np.array([e.action for e in batch], dtype=np.int64)
    rows = np.arange(len(batch))

    out, activations = q_eval.forward_with_cache(x)
    error = out[rows, actions] - y
    loss = float(np.mean(error ** 2))

    d_out = np.zeros_like(out)
    d_out[rows, actions] = 2.0 * error / len(batch)
    q_eval.apply_sgd(q_eval.backward(activations, d_out), cfg.learning_rate)
    return loss


def ddqn_train_step(
    batch: Sequence[Experience],
    q_eval: QNetwork,
    q_target: QNetwork,
    cfg: AgentConfig,
    normalizer: StateNormalizer = UNSCALED,
) -> float:
    return td_train_step(batch, q_eval, q_target, cfg, double=True, normalizer=normalizer)


def sync_target(q_eval: QNetwork, q_target: QNetwork) -> None:
    q_target.copy_from(q_eval)


def decay_epsilon(cfg: AgentConfig, epsilon: float) -> float:
    return max(cfg.epsilon_min, epsilon * cfg.epsilon_decay)


# Checkpoints

class CheckpointHeader(BaseModel):
    num_terminals: int
    layer_sizes: List[int]
    step: int
    epsilon: float
    size_scale: float
    priority_scale: float
    dtype: str = "<f8"


def save_checkpoint(path: Union[str, Path], network: QNetwork, header: CheckpointHeader) -> Path:
    """
    Write MECQNET1 magic, one JSON header line, then every parameter as
    little-endian float64 in row-major order (W1, b1, W2, b2, ...)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(header.model_dump_json().encode("utf-8") + b"\n")
        for param in network.parameters():
            f.write(np.ascontiguousarray(param, dtype="<f8").tobytes())
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[CheckpointHeader, QNetwork]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}", path=str(path))
    try:
        with open(path, "rb") as f:
            if f.readline() != CHECKPOINT_MAGIC:
                raise CheckpointError(f"{path} is not a Q-network checkpoint", path=str(path))
            header = CheckpointHeader.model_validate_json(f.readline())
            payload = f.read()
    except CheckpointError:
        raise
    except Exception as e:
        logger.error(f"Error reading checkpoint {path}: {e}", exc_info=True)
        raise CheckpointError(f"unreadable checkpoint {path}: {e}", path=str(path)) from e

    network = QNetwork(header.layer_sizes)
    offset = 0
    for param in network.parameters():
        nbytes = param.size * 8
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path} is truncated", path=str(path))
        param[...] = np.frombuffer(chunk, dtype="<f8").reshape(param.shape)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path} has {len(payload) - offset} trailing bytes", path=str(path))
    return header, network


# Agent

class SchedulerAgent(SchedulingPolicy):
    """
    Learning scheduler for one server

    Stores transitions until the replay buffer is full, then runs one train
    step per call to learn(), decaying epsilon after each step and hard
    copying Q_eval into Q_target every target_sync_period steps.
    """

    def __init__(
        self,
        num_terminals: int,
        cfg: AgentConfig,
        normalizer: StateNormalizer = UNSCALED,
        seed: Seed = 0,
        double: bool = True,
        learning: bool = True,
    ):
        check_enumerable(num_terminals)
        self.name = "r_ddqn" if double else "dqn"
        self.num_terminals = num_terminals
        self.cfg = cfg
        self.normalizer = normalizer
        self.double = double
        self.learning = learning
        self.rng = np.random.default_rng(seed)

        self.q_eval = QNetwork.for_terminals(num_terminals, cfg.hidden_sizes, rng=self.rng)
        self.q_target = self.q_eval.clone()
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.epsilon = cfg.epsilon_start
        self.train_steps = 0

    def schedule(self, state: SchedulerState, view: ServerView) -> int:
        q_values = self.q_eval.forward(self.normalizer.transform(state))
        epsilon = self.epsilon if self.learning else 0.0
        return select_action(q_values, feasible_mask(state), epsilon, self.rng)

    def record(self, experience: Experience) -> None:
        if self.learning:
            self.buffer.add(replace(experience, reward=experience.reward * self.cfg.reward_scale))

    def learn(self) -> Optional[float]:
        if not self.learning or not self.buffer.is_full:
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        loss = td_train_step(batch, self.q_eval, self.q_target, self.cfg, double=self.double, normalizer=self.normalizer)
        self.train_steps += 1
        self.epsilon = decay_epsilon(self.cfg, self.epsilon)
        if self.train_steps % self.cfg.target_sync_period == 0:
            sync_target(self.q_eval, self.q_target)
        return loss

    def header(self) -> CheckpointHeader:
        return CheckpointHeader(
            num_terminals=self.num_terminals,
            layer_sizes=list(self.q_eval.layer_sizes),
            step=self.train_steps,
            epsilon=self.epsilon,
            size_scale=self.normalizer.size_scale,
            priority_scale=self.normalizer.priority_scale,
        )

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.q_eval, self.header())

    @classmethod
    def from_checkpoint(
        cls, path: Union[str, Path], cfg: AgentConfig, seed: Seed = 0, double: bool = True, learning: bool = False
    ) -> "SchedulerAgent":
        header, network = load_checkpoint(path)
        expected = [2 * header.num_terminals + 1, *cfg.hidden_sizes, 2 ** header.num_terminals]
        if list(network.layer_sizes) != expected:
            raise CheckpointError(
                f"{path} has layers {list(network.layer_sizes)}, expected {expected}", path=str(path)
            )
        agent = cls(
            header.num_terminals,
            cfg,
            normalizer=StateNormalizer(header.size_scale, header.priority_scale),
            seed=seed,
            double=double,
            learning=learning,
        )
        agent.q_eval.copy_from(network)
        sync_target(agent.q_eval, agent.q_target)
        agent.train_steps = header.step
        agent.epsilon = header.epsilon
        return agent
