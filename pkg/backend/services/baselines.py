"""
Baselines
Comparison schedulers: single-estimator DQN, depth-limited exhaustive
traversal, accept-all, and the local-only stage-one override
"""

from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from models.agent import ActionVector, AgentConfig, Experience, SchedulerState
from models.domain import BitQueue
from models.world import ServerProfile
from services.cost_model import drain_queue_one_slot, slot_capacity_bits
from services.decision_service import LOCAL, Candidate, OffloadDecision
from services.q_network import QNetwork
from services.rl_scheduler import (
    UNSCALED,
    Seed,
    SchedulerAgent,
    StateNormalizer,
    accepted_tasks,
    check_enumerable,
    evaluate_reward,
    feasible_mask,
    td_train_step,
)
from services.scheduling_policy import SchedulingPolicy, ServerView
from utils.exceptions import InvalidCallError

# Maps (depth level, queue before the slot) to the requests expected in that slot
RequestForecast = Callable[[int, BitQueue], Optional[SchedulerState]]


def dqn_train_step(
    batch: Sequence[Experience],
    q_eval: QNetwork,
    q_target: QNetwork,
    cfg: AgentConfig,
    normalizer: StateNormalizer = UNSCALED,
) -> float:
    """Same as ddqn_train_step, but Q_target both picks and values the next action"""
    return td_train_step(batch, q_eval, q_target, cfg, double=False, normalizer=normalizer)


def dqn_agent(num_terminals: int, cfg: AgentConfig, normalizer: StateNormalizer = UNSCALED, seed: Seed = 0,
              learning: bool = True) -> SchedulerAgent:
    return SchedulerAgent(num_terminals, cfg, normalizer=normalizer, seed=seed, double=False, learning=learning)


def no_future_requests(level: int, queue: BitQueue) -> Optional[SchedulerState]:
    return None


def _empty_state(num_terminals: int, rho: float) -> SchedulerState:
    return SchedulerState(sizes=np.zeros(num_terminals), priorities=np.zeros(num_terminals), rho=rho)


def _best_sequence(
    state: SchedulerState,
    queue: BitQueue,
    server: ServerProfile,
    slot_s: float,
    depth: int,
    v_b: float,
    forecast: RequestForecast,
    level: int = 0,
) -> Tuple[float, int]:
    """Best total reward over the remaining horizon and the action that starts it"""
    best_total, best_action = -np.inf, 0
    capacity = slot_capacity_bits(server, slot_s)
    for action in feasible_mask(state):
        action = int(action)
        total = evaluate_reward(state, action, queue, server, slot_s, v_b).total
        if depth > 1:
            after = queue.copy()
            for task in accepted_tasks(state, action):
                after.push(task)
            drain_queue_one_slot(after, capacity)
            upcoming = forecast(level + 1, after)
            if upcoming is None:
                upcoming = _empty_state(state.num_terminals, 1.0 - after.pending_bits / capacity)
            total += _best_sequence(upcoming, after, server, slot_s, depth - 1, v_b, forecast, level + 1)[0]
        if total > best_total:
            best_total, best_action = total, action
    return best_total, best_action


def exhaustive_schedule(
    state: SchedulerState,
    view: ServerView,
    depth: int,
    v_b: float,
    forecast: RequestForecast = no_future_requests,
) -> ActionVector:
    """
    Enumerate every feasible action sequence over `depth` slots

    Later slots drain the queue and see the forecast requests (none by
    default). Returns the first action of the highest-reward sequence,
    lowest action index on ties.
    """
    if depth < 1:
        raise InvalidCallError(f"traversal depth must be at least 1, got {depth}")
    check_enumerable(state.num_terminals)
    _, action = _best_sequence(state, view.task_queue, view.profile, view.slot_s, depth, v_b, forecast)
    return ActionVector.from_index(action, state.num_terminals)


def accept_all_schedule(state: SchedulerState) -> ActionVector:
    return ActionVector.from_index(state.request_mask, state.num_terminals)


def local_only_policy() -> Callable[[Sequence[Candidate], float], OffloadDecision]:
    """Stage-one override that keeps every task on its terminal"""

    def never_offload(candidates: Sequence[Candidate], alpha: float) -> OffloadDecision:
        return LOCAL

    return never_offload


class ExhaustiveScheduler(SchedulingPolicy):
    name = "exhaustive"

    def __init__(self, depth: int, v_b: float, forecast: RequestForecast = no_future_requests):
        self.depth = depth
        self.v_b = v_b
        self.forecast = forecast

    def schedule(self, state: SchedulerState, view: ServerView) -> int:
        return exhaustive_schedule(state, view, self.depth, self.v_b, self.forecast).index


class AcceptAllScheduler(SchedulingPolicy):
    name = "accept_all"

    def schedule(self, state: SchedulerState, view: ServerView) -> int:
        return accept_all_schedule(state).index
