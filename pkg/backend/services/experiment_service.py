"""
Experiment Service
Training runs, policy comparisons, hyperparameter sweeps and evaluations,
each written as CSV with a provenance comment line
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from models.agent import AgentConfig
from models.experiment import ExperimentSpec, PolicyTag
from models.world import WorldConfig
from services.baselines import AcceptAllScheduler, ExhaustiveScheduler, local_only_policy
from services.decision_service import plan_offload
from services.rl_scheduler import SchedulerAgent, StateNormalizer
from services.scheduling_policy import SchedulingPolicy
from services.simulation_service import World, run_summary_frame, write_slot_logs
from utils.exceptions import CheckpointError, ConfigError

LOSS_COLUMNS = ["episode", "mean_loss", "epsilon"]
COMPARE_COLUMNS = ["sweep_value", "policy", "I_mean", "I_std", "seeds"]
EVAL_SEED_OFFSET = 10_000


@dataclass
class RunResult:
    outputs: Dict[str, Path] = field(default_factory=dict)
    checkpoints: List[Path] = field(default_factory=list)


def normalizer_for(world: WorldConfig) -> StateNormalizer:
    return StateNormalizer(
        size_scale=float(world.task_gen.size_max_bits),
        priority_scale=float(world.task_gen.priority_max),
    )


def checkpoint_path(root: Path, tag: PolicyTag, num_terminals: int, server_id: int) -> Path:
    return Path(root) / tag.value / f"m{num_terminals}" / f"server_{server_id}.qnet"


def apply_sweep(world: WorldConfig, axis: str, value: float) -> WorldConfig:
    if axis == "terminals":
        return world.with_terminals(int(value))
    if axis == "speed":
        return world.with_speed(float(value))
    raise ConfigError(f"unknown sweep axis {axis!r}", field_path="sweep.axis")


def write_csv(frame: pd.DataFrame, path: Path, spec: ExperimentSpec, seed: int, extra: str = "") -> Path:
    """CSV preceded by '# config_sha256=<hex> seed=<n>[ extra]'"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_sha256={spec.config_hash()} seed={seed}{(' ' + extra) if extra else ''}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


class ExperimentService:
    """Drives worlds and agents for every CLI verb"""

    # Agents

    def new_learners(
        self, world: WorldConfig, agent_cfg: AgentConfig, tag: PolicyTag, seed: int
    ) -> List[SchedulerAgent]:
        if not tag.learned:
            raise ConfigError(f"policy {tag.value} is not trainable", field_path="policy.tag")
        return [
            SchedulerAgent(
                world.num_terminals,
                agent_cfg,
                normalizer=normalizer_for(world),
                seed=[seed, n],
                double=tag is PolicyTag.R_DDQN,
            )
            for n in range(world.num_servers)
        ]

    def train_agents(
        self, world: WorldConfig, agent_cfg: AgentConfig, tag: PolicyTag, seed: int, episodes: int
    ) -> Tuple[List[SchedulerAgent], pd.DataFrame]:
        """
        Train one learner per server over `episodes` fresh worlds

        Returns:
            The agents and a frame with the per-episode mean loss and epsilon
        """
        agents = self.new_learners(world, agent_cfg, tag, seed)
        rows = []
        for episode in range(episodes):
            sim = World(world, agents, seed=[seed, episode], base_reward=agent_cfg.base_reward)
            logs = sim.run()
            losses = [loss for log in logs for loss in log.train_losses if loss is not None]
            mean_loss = float(np.mean(losses)) if losses else math.nan
            epsilon = float(np.mean([a.epsilon for a in agents]))
            rows.append({"episode": episode, "mean_loss": mean_loss, "epsilon": epsilon})
            if (episode + 1) % 10 == 0 or episode == episodes - 1:
                logger.info(
                    f"[{tag.value}] episode {episode + 1}/{episodes} mean_loss={mean_loss:.6g} "
                    f"epsilon={epsilon:.4f} I={sim.importance():.3f}"
                )
        return agents, pd.DataFrame(rows, columns=LOSS_COLUMNS)

    def load_learners(
        self, root: Path, world: WorldConfig, agent_cfg: AgentConfig, tag: PolicyTag, seed: int
    ) -> List[SchedulerAgent]:
        agents = []
        for n in range(world.num_servers):
            path = checkpoint_path(root, tag, world.num_terminals, n)
            if not path.is_file():
                raise CheckpointError(f"missing checkpoint for policy {tag.value}: {path}", path=str(path))
            agents.append(
                SchedulerAgent.from_checkpoint(
                    path, agent_cfg, seed=[seed, n], double=tag is PolicyTag.R_DDQN, learning=False
                )
            )
        return agents

    def save_learners(self, root: Path, agents: Sequence[SchedulerAgent], tag: PolicyTag) -> List[Path]:
        return [
            agent.save(checkpoint_path(root, tag, agent.num_terminals, n))
            for n, agent in enumerate(agents)
        ]

    def evaluation_policies(
        self,
        world: WorldConfig,
        agent_cfg: AgentConfig,
        tag: PolicyTag,
        depth: int,
        checkpoint_root: Optional[Path],
        seed: int,
    ) -> Tuple[List[SchedulingPolicy], object]:
        """Server policies plus the stage-one rule for a frozen evaluation run"""
        if tag.learned:
            if checkpoint_root is None:
                raise CheckpointError(f"policy {tag.value} needs a checkpoint directory")
            return self.load_learners(checkpoint_root, world, agent_cfg, tag, seed), plan_offload
        if tag is PolicyTag.EXHAUSTIVE:
            return [ExhaustiveScheduler(depth, agent_cfg.base_reward) for _ in range(world.num_servers)], plan_offload
        if tag is PolicyTag.ACCEPT_ALL:
            return [AcceptAllScheduler() for _ in range(world.num_servers)], plan_offload
        return [AcceptAllScheduler() for _ in range(world.num_servers)], local_only_policy()

    def evaluate_episode(
        self,
        world: WorldConfig,
        agent_cfg: AgentConfig,
        tag: PolicyTag,
        world_seed: Sequence[int],
        depth: int = 1,
        checkpoint_root: Optional[Path] = None,
    ) -> World:
        policies, stage_one = self.evaluation_policies(world, agent_cfg, tag, depth, checkpoint_root, world_seed[0])
        sim = World(world, policies, seed=list(world_seed), base_reward=agent_cfg.base_reward, stage_one=stage_one)
        sim.run()
        return sim

    def ensure_checkpoints(self, spec: ExperimentSpec, root: Path, tag: PolicyTag, num_terminals: int) -> None:
        if checkpoint_path(root, tag, num_terminals, 0).is_file() or not spec.train_missing:
            return
        logger.info(f"Training missing {tag.value} checkpoints for M={num_terminals}")
        world = spec.world.with_terminals(num_terminals)
        agents, _ = self.train_agents(world, spec.agent, tag, spec.seed, spec.episodes)
        self.save_learners(root, agents, tag)

    # Verbs

    def train(self, spec: ExperimentSpec) -> RunResult:
        tag = spec.policy.tag
        out = Path(spec.output_dir)
        try:
            agents, frame = self.train_agents(spec.world, spec.agent, tag, spec.seed, spec.episodes)
            result = RunResult()
            result.outputs["loss"] = write_csv(frame, out / f"train_loss_{tag.value}.csv", spec, spec.seed)
            result.checkpoints = self.save_learners(spec.resolved_checkpoint_dir(), agents, tag)
            return result
        except Exception as e:
            logger.error(f"Training failed: {e}", exc_info=True)
            raise

    def compare(self, spec: ExperimentSpec) -> RunResult:
        if spec.sweep is None:
            raise ConfigError("compare needs a sweep axis", field_path="sweep")
        root = spec.resolved_checkpoint_dir()
        summary, runs = [], []
        for value in spec.sweep.values:
            world = apply_sweep(spec.world, spec.sweep.axis, value)
            logger.info(f"Sweep point {spec.sweep.axis}={value}")
            for tag in spec.compare_policies:
                if tag.learned:
                    self.ensure_checkpoints(spec, root, tag, world.num_terminals)
                scores = []
                for i in range(spec.eval_seeds):
                    sim = self.evaluate_episode(
                        world, spec.agent, tag, [spec.seed, EVAL_SEED_OFFSET + i], spec.policy.depth, root
                    )
                    scores.append(sim.importance())
                    runs.append({"sweep_value": value, "policy": tag.value, "seed": i, "I": scores[-1]})
                summary.append({
                    "sweep_value": value,
                    "policy": tag.value,
                    "I_mean": float(np.mean(scores)),
                    "I_std": float(np.std(scores)),
                    "seeds": len(scores),
                })
                logger.info(f"  {tag.value}: I={np.mean(scores):.4f} ± {np.std(scores):.4f}")

        out = Path(spec.output_dir)
        extra = f"depth={spec.policy.depth} axis={spec.sweep.axis}"
        result = RunResult()
        result.outputs["compare"] = write_csv(
            pd.DataFrame(summary, columns=COMPARE_COLUMNS), out / f"compare_{spec.sweep.axis}.csv", spec, spec.seed, extra
        )
        result.outputs["runs"] = write_csv(
            pd.DataFrame(runs, columns=["sweep_value", "policy", "seed", "I"]),
            out / f"compare_{spec.sweep.axis}_runs.csv",
            spec,
            spec.seed,
            extra,
        )
        return result

    def sweep_hyper(self, spec: ExperimentSpec) -> RunResult:
        if spec.hyper_sweep is None:
            raise ConfigError("sweep-hyper needs a hyper_sweep axis", field_path="hyper_sweep")
        axis = spec.hyper_sweep.axis
        tag = spec.policy.tag if spec.policy.tag.learned else PolicyTag.R_DDQN
        frames = []
        for value in spec.hyper_sweep.values:
            setting = int(value) if axis == "batch_size" else float(value)
            if axis == "batch_size" and not 1 <= setting <= spec.agent.buffer_capacity:
                raise ConfigError(
                    f"batch size {setting} must lie in [1, {spec.agent.buffer_capacity}]", field_path="hyper_sweep.values"
                )
            if axis == "learning_rate" and setting <= 0:
                raise ConfigError(f"learning rate {setting} must be positive", field_path="hyper_sweep.values")
            agent_cfg = spec.agent.model_copy(update={axis: setting})
            for k in range(spec.train_seeds):
                seed = spec.seed + k
                logger.info(f"Hyper sweep {axis}={setting} seed={seed}")
                _, frame = self.train_agents(spec.world, agent_cfg, tag, seed, spec.episodes)
                frame.insert(0, "seed", seed)
                frame.insert(0, "value", setting)
                frames.append(frame)

        columns = ["value", "seed", *LOSS_COLUMNS]
        merged = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
        result = RunResult()
        result.outputs["sweep"] = write_csv(
            merged[columns], Path(spec.output_dir) / f"sweep_{axis}.csv", spec, spec.seed, f"axis={axis}"
        )
        return result

    def evaluate(self, spec: ExperimentSpec) -> RunResult:
        tag = spec.policy.tag
        root = spec.resolved_checkpoint_dir() if tag.learned else None
        out = Path(spec.output_dir)
        result = RunResult()
        rows = []
        for i in range(spec.eval_seeds):
            sim = self.evaluate_episode(spec.world, spec.agent, tag, [spec.seed, EVAL_SEED_OFFSET + i], spec.policy.depth, root)
            rows.append({"seed": i, "policy": tag.value, "I": sim.importance()})
            if i == 0:
                result.outputs["slot_log"] = write_slot_logs(sim.logs, out / f"slot_log_{tag.value}.ndjson")
                result.outputs["summary"] = write_csv(
                    run_summary_frame(sim.logs), out / f"run_summary_{tag.value}.csv", spec, spec.seed
                )
        result.outputs["evaluate"] = write_csv(
            pd.DataFrame(rows, columns=["seed", "policy", "I"]),
            out / f"evaluate_{tag.value}.csv",
            spec,
            spec.seed,
            f"depth={spec.policy.depth}",
        )
        return result


# Singleton instance
experiment_service = ExperimentService()
