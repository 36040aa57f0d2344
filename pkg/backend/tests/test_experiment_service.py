import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from models.experiment import PolicyTag, load_spec, parse_spec
from services.experiment_service import (
    EVAL_SEED_OFFSET,
    apply_sweep,
    checkpoint_path,
    experiment_service,
    normalizer_for,
)
from services.rl_scheduler import SchedulerAgent, load_checkpoint
from utils.config import settings
from utils.exceptions import CheckpointError, ConfigError


def read_csv(path):
    with open(path, encoding="utf-8") as f:
        comment = f.readline().rstrip("\n")
    return comment, pd.read_csv(path, comment="#")


def with_updates(spec, **updates):
    data = spec.model_dump(mode="json", by_alias=True)
    data.update(updates)
    return parse_spec(data)


# Configuration

def test_parse_spec_reports_field_path():
    with pytest.raises(ConfigError) as err:
        parse_spec({"world": {"task_gen": {"size_min_bits": 10, "size_max_bits": 5}}})
    assert err.value.field_path.startswith("world.task_gen")

    with pytest.raises(ConfigError) as err:
        parse_spec({"agent": {"learning_rate": 0.01, "momentum": 0.9}})
    assert err.value.field_path == "agent.momentum"

    with pytest.raises(ConfigError):
        parse_spec({"schema_version": 2})
    with pytest.raises(ConfigError):
        parse_spec({"sweep": {"axis": "terminals", "values": []}})
    with pytest.raises(ConfigError):
        parse_spec({"sweep": {"axis": "terminals", "values": [2.5]}})


def test_load_spec_from_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text('{"seed": 7, "world": {"lambda": 0.8}}')
    spec = load_spec(path)
    assert spec.seed == 7
    assert spec.world.lambda_ == 0.8
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "missing.json")


def test_config_hash_ignores_output_paths(small_spec, tmp_path):
    moved = with_updates(small_spec, output_dir=str(tmp_path / "elsewhere"), checkpoint_dir="ckpt")
    assert moved.config_hash() == small_spec.config_hash()
    assert with_updates(small_spec, seed=99).config_hash() != small_spec.config_hash()


def test_checkpoint_dir_defaults_to_settings():
    assert parse_spec({}).resolved_checkpoint_dir() == Path(settings.CHECKPOINT_DIR)
    assert parse_spec({"checkpoint_dir": "elsewhere"}).resolved_checkpoint_dir() == Path("elsewhere")


def test_apply_sweep(small_world):
    assert apply_sweep(small_world, "terminals", 5.0).num_terminals == 5
    fast = apply_sweep(small_world, "speed", 12.0)
    assert fast.mobility.speed_min_mps == fast.mobility.speed_max_mps == 12.0


def test_normalizer_uses_task_maxima(small_world):
    norm = normalizer_for(small_world)
    assert norm.size_scale == small_world.task_gen.size_max_bits
    assert norm.priority_scale == small_world.task_gen.priority_max


# Train

def test_train_writes_curve_and_checkpoints(small_spec):
    result = experiment_service.train(small_spec)
    comment, frame = read_csv(result.outputs["loss"])
    assert comment == f"# config_sha256={small_spec.config_hash()} seed={small_spec.seed}"
    assert list(frame.columns) == ["episode", "mean_loss", "epsilon"]
    assert list(frame["episode"]) == [0, 1]
    # the replay buffer only fills during the second episode
    assert math.isnan(frame["mean_loss"][0])
    assert frame["mean_loss"][1] >= 0
    assert frame["epsilon"][1] < 1.0

    root = small_spec.resolved_checkpoint_dir()
    assert result.checkpoints == [checkpoint_path(root, PolicyTag.R_DDQN, 3, n) for n in range(2)]
    header, _ = load_checkpoint(result.checkpoints[0])
    assert header.num_terminals == 3
    assert header.step > 0


def test_train_zero_episodes_saves_initial_networks(small_spec):
    spec = with_updates(small_spec, episodes=0, policy={"tag": "dqn", "depth": 1})
    result = experiment_service.train(spec)
    _, frame = read_csv(result.outputs["loss"])
    assert frame.empty
    assert list(frame.columns) == ["episode", "mean_loss", "epsilon"]

    fresh = SchedulerAgent(3, spec.agent, seed=[spec.seed, 1], double=False)
    _, saved = load_checkpoint(result.checkpoints[1])
    for a, b in zip(fresh.q_eval.parameters(), saved.parameters()):
        np.testing.assert_array_equal(a, b)


def test_train_is_reproducible(small_spec, tmp_path):
    first = experiment_service.train(small_spec)
    again = experiment_service.train(
        with_updates(small_spec, output_dir=str(tmp_path / "again"), checkpoint_dir=str(tmp_path / "again" / "ckpt"))
    )
    assert first.checkpoints != again.checkpoints
    assert first.outputs["loss"].read_bytes() == again.outputs["loss"].read_bytes()
    for a, b in zip(first.checkpoints, again.checkpoints):
        assert a.read_bytes() == b.read_bytes()


def test_train_rejects_baseline_policy(small_spec):
    with pytest.raises(ConfigError) as err:
        experiment_service.train(with_updates(small_spec, policy={"tag": "exhaustive", "depth": 1}))
    assert err.value.field_path == "policy.tag"


# Compare

def test_compare_baselines_over_terminal_counts(small_spec):
    spec = with_updates(
        small_spec,
        sweep={"axis": "terminals", "values": [2, 3]},
        compare_policies=["accept_all", "exhaustive", "local_only"],
    )
    result = experiment_service.compare(spec)
    comment, frame = read_csv(result.outputs["compare"])
    assert comment.endswith("depth=1 axis=terminals")
    assert list(frame.columns) == ["sweep_value", "policy", "I_mean", "I_std", "seeds"]
    assert len(frame) == 6
    assert set(frame["policy"]) == {"accept_all", "exhaustive", "local_only"}
    assert (frame["seeds"] == 2).all()

    _, runs = read_csv(result.outputs["runs"])
    assert len(runs) == 12
    one = runs[(runs["policy"] == "accept_all") & (runs["sweep_value"] == 2)]
    summary = frame[(frame["policy"] == "accept_all") & (frame["sweep_value"] == 2)].iloc[0]
    assert summary["I_mean"] == pytest.approx(one["I"].mean())
    assert summary["I_std"] == pytest.approx(one["I"].std(ddof=0))


def test_compare_needs_checkpoints_for_learned_policies(small_spec):
    spec = with_updates(small_spec, sweep={"axis": "speed", "values": [5.0]}, compare_policies=["r_ddqn"])
    with pytest.raises(CheckpointError) as err:
        experiment_service.compare(spec)
    assert "server_0.qnet" in str(err.value)


def test_compare_trains_missing_checkpoints(small_spec):
    spec = with_updates(
        small_spec,
        episodes=1,
        sweep={"axis": "speed", "values": [5.0, 15.0]},
        compare_policies=["r_ddqn", "dqn"],
        train_missing=True,
    )
    result = experiment_service.compare(spec)
    _, frame = read_csv(result.outputs["compare"])
    assert len(frame) == 4
    root = spec.resolved_checkpoint_dir()
    assert checkpoint_path(root, PolicyTag.DQN, 3, 1).is_file()


def test_compare_requires_sweep(small_spec):
    with pytest.raises(ConfigError):
        experiment_service.compare(small_spec)


def test_evaluation_seeds_are_offset(small_spec):
    sim = experiment_service.evaluate_episode(
        small_spec.world, small_spec.agent, PolicyTag.ACCEPT_ALL, [small_spec.seed, EVAL_SEED_OFFSET]
    )
    assert len(sim.logs) == small_spec.world.total_slots


# Hyperparameter sweep

def test_sweep_learning_rates(small_spec):
    spec = with_updates(small_spec, hyper_sweep={"axis": "learning_rate", "values": [0.1, 0.01]})
    result = experiment_service.sweep_hyper(spec)
    comment, frame = read_csv(result.outputs["sweep"])
    assert comment.endswith("axis=learning_rate")
    assert list(frame.columns) == ["value", "seed", "episode", "mean_loss", "epsilon"]
    assert len(frame) == 4
    assert sorted(set(frame["value"])) == [0.01, 0.1]


def test_single_setting_sweep_matches_train(small_spec):
    spec = with_updates(small_spec, hyper_sweep={"axis": "batch_size", "values": [8]})
    _, swept = read_csv(experiment_service.sweep_hyper(spec).outputs["sweep"])
    _, trained = read_csv(experiment_service.train(spec).outputs["loss"])
    pd.testing.assert_frame_equal(
        swept[["episode", "mean_loss", "epsilon"]].reset_index(drop=True), trained, check_dtype=False
    )


def test_sweep_rejects_batch_larger_than_buffer(small_spec):
    spec = with_updates(small_spec, hyper_sweep={"axis": "batch_size", "values": [64]})
    with pytest.raises(ConfigError):
        experiment_service.sweep_hyper(spec)


# Evaluate

def test_evaluate_baseline_outputs(small_spec):
    spec = with_updates(small_spec, policy={"tag": "accept_all", "depth": 1})
    result = experiment_service.evaluate(spec)
    _, frame = read_csv(result.outputs["evaluate"])
    assert list(frame.columns) == ["seed", "policy", "I"]
    assert len(frame) == spec.eval_seeds
    assert len(result.outputs["slot_log"].read_text().splitlines()) == spec.world.total_slots
    _, summary = read_csv(result.outputs["summary"])
    assert len(summary) == spec.world.total_slots


def test_evaluate_trained_policy(small_spec):
    experiment_service.train(small_spec)
    result = experiment_service.evaluate(small_spec)
    _, frame = read_csv(result.outputs["evaluate"])
    assert (frame["policy"] == "r_ddqn").all()
    assert (frame["I"] >= 0).all()
