import numpy as np
import pytest

from models.agent import AgentConfig, SchedulerState
from models.domain import BitQueue, TaskSpec
from models.experiment import ExperimentSpec
from models.world import ServerProfile, WorldConfig
from services.q_network import QNetwork


def make_task(size_bits, priority=1, task_id=0, owner=0, created_slot=0, target_server=None):
    return TaskSpec(
        id=task_id,
        size_bits=size_bits,
        priority=priority,
        created_slot=created_slot,
        owner=owner,
        target_server=target_server,
    )


def make_queue(sizes, priorities=None):
    priorities = priorities or [1] * len(sizes)
    return BitQueue(make_task(s, p, task_id=i) for i, (s, p) in enumerate(zip(sizes, priorities)))


def state(sizes, priorities, rho=1.0):
    return SchedulerState(sizes=np.array(sizes, dtype=float), priorities=np.array(priorities, dtype=float), rho=rho)


def constant_network(outputs, inputs=3):
    """Zero weights, so the output is the last bias for every input"""
    net = QNetwork([inputs, 2, len(outputs)])
    for w in net.weights:
        w[...] = 0.0
    net.biases[-1][...] = outputs
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_server():
    """A server that finishes exactly 8 bits in a 1 s slot"""
    return ServerProfile(cpu_hz=8.0, bits_per_cycle=1.0, coverage_radius_m=100.0)


@pytest.fixture
def small_world():
    return WorldConfig(
        num_terminals=3,
        num_servers=2,
        total_slots=30,
        arena_width_m=300.0,
        arena_height_m=300.0,
        server_positions=[(100.0, 150.0), (200.0, 150.0)],
    )


@pytest.fixture
def fast_agent():
    return AgentConfig(
        hidden_sizes=[16, 16],
        buffer_capacity=32,
        batch_size=8,
        target_sync_period=5,
    )


@pytest.fixture
def small_spec(tmp_path, small_world, fast_agent):
    return ExperimentSpec(
        world=small_world,
        agent=fast_agent,
        episodes=2,
        eval_seeds=2,
        output_dir=str(tmp_path / "runs"),
        checkpoint_dir=str(tmp_path / "runs" / "checkpoints"),
    )
