"""
Experiment API Endpoints
Short evaluation runs for inspecting policies over HTTP
"""

from pathlib import Path
from typing import List, Optional

from fastapi import APIRouter
from loguru import logger
from pydantic import BaseModel, Field

from models.agent import AgentConfig
from models.experiment import PolicyTag
from models.world import WorldConfig
from services.experiment_service import experiment_service
from utils.config import settings

router = APIRouter()

# Request/Response Models
class EvaluateRequest(BaseModel):
    world: WorldConfig = WorldConfig()
    agent: AgentConfig = AgentConfig()
    policy: PolicyTag = PolicyTag.ACCEPT_ALL
    seed: int = Field(settings.DEFAULT_SEED, ge=0)
    depth: int = Field(1, ge=1)
    checkpoint_dir: Optional[str] = None

class EvaluateResponse(BaseModel):
    policy: PolicyTag
    seed: int
    importance: float
    slots: int
    server_rewards: List[float]
    final_queue_bits: List[float]

class PolicyInfo(BaseModel):
    tag: PolicyTag
    needs_checkpoint: bool

# Endpoints

@router.get("/policies", response_model=List[PolicyInfo])
async def list_policies():
    return [PolicyInfo(tag=tag, needs_checkpoint=tag.learned) for tag in PolicyTag]


@router.post("/evaluate", response_model=EvaluateResponse)
def evaluate(request: EvaluateRequest):
    """
    Run one frozen evaluation episode

    Learned policies load their checkpoints from checkpoint_dir (or the
    configured CHECKPOINT_DIR). Episodes longer than API_MAX_SLOTS are cut
    to that many slots.
    """
    world = request.world
    if world.total_slots > settings.API_MAX_SLOTS:
        logger.info(f"Capping evaluation at {settings.API_MAX_SLOTS} slots (requested {world.total_slots})")
        world = world.model_copy(update={"total_slots": settings.API_MAX_SLOTS})

    root = Path(request.checkpoint_dir or settings.CHECKPOINT_DIR)
    logger.info(f"Evaluating {request.policy.value} seed={request.seed} M={world.num_terminals}")
    sim = experiment_service.evaluate_episode(
        world, request.agent, request.policy, [request.seed, 0], depth=request.depth, checkpoint_root=root
    )

    server_rewards = [0.0] * world.num_servers
    for log in sim.logs:
        for n, reward in enumerate(log.rewards):
            server_rewards[n] += reward

    return EvaluateResponse(
        policy=request.policy,
        seed=request.seed,
        importance=sim.importance(),
        slots=len(sim.logs),
        server_rewards=server_rewards,
        final_queue_bits=sim.logs[-1].server_queue_bits if sim.logs else [0.0] * world.num_servers,
    )
