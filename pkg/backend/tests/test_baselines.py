import itertools

import numpy as np
import pytest

from models.agent import AgentConfig, Experience
from models.domain import CostPair
from services.baselines import (
    AcceptAllScheduler,
    ExhaustiveScheduler,
    accept_all_schedule,
    dqn_agent,
    dqn_train_step,
    exhaustive_schedule,
    local_only_policy,
)
from services.decision_service import LOCAL, Candidate, evaluate_benefit
from services.q_network import QNetwork
from services.rl_scheduler import ddqn_train_step, evaluate_reward, feasible_mask
from services.scheduling_policy import ServerView
from tests.conftest import constant_network, make_queue, state
from utils.exceptions import CombinatorialLimitError, InvalidCallError


def view(server, sizes=(), priorities=None):
    return ServerView(0, server, make_queue(list(sizes), priorities), 1.0)


# DQN

def test_dqn_target_uses_target_network_max():
    cfg = AgentConfig(gamma=0.5, hidden_sizes=[2], batch_size=1, buffer_capacity=1)
    s = state([1.0], [1.0])
    batch = [Experience(s, 0, 1.0, s)]
    loss = dqn_train_step(batch, constant_network([1.0, 5.0]), constant_network([7.0, 2.0]), cfg)
    assert loss == pytest.approx(12.25, abs=1e-9)
    ddqn_loss = ddqn_train_step(batch, constant_network([1.0, 5.0]), constant_network([7.0, 2.0]), cfg)
    assert ddqn_loss == pytest.approx(1.0, abs=1e-9)


def test_dqn_equals_ddqn_without_bootstrap(rng):
    cfg = AgentConfig(gamma=0.0, hidden_sizes=[6], batch_size=4, buffer_capacity=4)
    base = QNetwork([5, 6, 4], rng=rng)
    target = QNetwork([5, 6, 4], rng=rng)
    batch = [
        Experience(state(rng.uniform(0, 1, 2), [1, 2]), int(a), float(r), state(rng.uniform(0, 1, 2), [2, 1]))
        for a, r in zip(rng.integers(0, 4, 4), rng.normal(size=4))
    ]
    a, b = base.clone(), base.clone()
    assert dqn_train_step(batch, a, target, cfg) == ddqn_train_step(batch, b, target, cfg)
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa, pb)


def test_dqn_agent_is_seeded(fast_agent):
    a, b = dqn_agent(2, fast_agent, seed=5), dqn_agent(2, fast_agent, seed=5)
    assert a.name == "dqn" and not a.double
    np.testing.assert_array_equal(a.q_eval.weights[0], b.q_eval.weights[0])


# Exhaustive

def test_exhaustive_depth_one_matches_enumeration(rng, unit_server):
    for _ in range(40):
        sizes = [float(s) if rng.random() < 0.7 else 0.0 for s in rng.integers(1, 9, size=3)]
        priorities = [float(p) if s > 0 else 0.0 for s, p in zip(sizes, rng.integers(1, 6, size=3))]
        s = state(sizes, priorities, 1.0)
        backlog = [int(b) for b in rng.integers(1, 9, size=rng.integers(0, 3))]
        v = view(unit_server, backlog)
        rewards = {int(a): evaluate_reward(s, int(a), v.task_queue, unit_server, 1.0, 10).total for a in feasible_mask(s)}
        best = max(rewards.values())
        expected = min(a for a, r in rewards.items() if r == best)
        assert exhaustive_schedule(s, v, 1, 10).index == expected


def test_exhaustive_accepts_single_fitting_request(unit_server):
    chosen = exhaustive_schedule(state([0, 4], [0, 3]), view(unit_server), 1, 10)
    assert chosen.bits == (0, 1)


def test_exhaustive_without_requests(unit_server):
    assert exhaustive_schedule(state([0, 0, 0], [0, 0, 0]), view(unit_server), 2, 10).index == 0


def test_exhaustive_deeper_search_adds_future_reward(unit_server):
    s = state([6, 6], [1, 5])
    depth_one = exhaustive_schedule(s, view(unit_server), 1, 10)
    depth_two = exhaustive_schedule(s, view(unit_server), 2, 10)
    # only one of the two tasks fits a slot; the priority-5 one wins at either depth
    assert depth_two.bits[1] == 1
    assert depth_one.bits[1] == 1


def test_exhaustive_uses_forecast(unit_server):
    calls = []

    def forecast(level, queue):
        calls.append((level, queue.pending_bits))
        return None

    exhaustive_schedule(state([4], [2]), view(unit_server), 3, 10, forecast=forecast)
    assert {level for level, _ in calls} == {1, 2}


def test_exhaustive_guards(unit_server):
    with pytest.raises(InvalidCallError):
        exhaustive_schedule(state([1], [1]), view(unit_server), 0, 10)
    with pytest.raises(CombinatorialLimitError):
        exhaustive_schedule(state([1] * 13, [1] * 13), view(unit_server), 1, 10)


def test_exhaustive_never_worse_than_any_fixed_action(rng, unit_server):
    for _ in range(20):
        sizes = [float(s) for s in rng.integers(1, 9, size=2)]
        s = state(sizes, [float(p) for p in rng.integers(1, 6, size=2)])
        v = view(unit_server)
        chosen = exhaustive_schedule(s, v, 1, 10).index
        chosen_reward = evaluate_reward(s, chosen, v.task_queue, unit_server, 1.0, 10).total
        for a in itertools.product([0, 1], repeat=2):
            index = a[0] + 2 * a[1]
            assert chosen_reward >= evaluate_reward(s, index, v.task_queue, unit_server, 1.0, 10).total


# Accept-all and local-only

def test_accept_all_schedule():
    assert accept_all_schedule(state([3, 0, 2, 1], [1, 0, 1, 1])).bits == (1, 0, 1, 1)
    assert accept_all_schedule(state([0, 0], [0, 0])).index == 0


def test_scheduler_wrappers(unit_server):
    s = state([4, 4], [3, 1])
    assert AcceptAllScheduler().schedule(s, view(unit_server)) == 3
    assert ExhaustiveScheduler(1, 10).schedule(s, view(unit_server)) == 3
    assert AcceptAllScheduler().learn() is None


def test_local_only_never_offloads():
    never = local_only_policy()
    great = Candidate(0, 100.0, 0.0, evaluate_benefit(CostPair(10, 10), CostPair(0, 0), 0.5))
    assert never([great], 5.0) == LOCAL
