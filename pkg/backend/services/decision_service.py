"""
Decision Service
Stage one: each terminal weighs local against offloaded execution and picks
the server it is heading towards with the best benefit
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from loguru import logger

from models.domain import CostPair
from utils.exceptions import ConfigError


@dataclass(frozen=True)
class BenefitReport:
    delay_benefit_s: float
    energy_benefit_j: float
    overall: float
    lambda_: float


@dataclass(frozen=True)
class ServerScore:
    server_id: int
    score: float
    d_now_m: float
    d_next_m: float
    alpha: float


@dataclass(frozen=True)
class OffloadDecision:
    d: int
    chosen_server: Optional[int] = None

    def __post_init__(self):
        if (self.d == 1) != (self.chosen_server is not None):
            raise ValueError("chosen_server must be set exactly when d == 1")


LOCAL = OffloadDecision(d=0)


@dataclass(frozen=True)
class Candidate:
    """A covering server as seen by one terminal in one slot"""

    server_id: int
    d_now_m: float
    d_next_m: float
    benefit: BenefitReport


def evaluate_benefit(local: CostPair, offload: CostPair, lambda_: float) -> BenefitReport:
    if not 0.0 <= lambda_ <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lambda_}", field_path="world.lambda")
    delay_benefit = local.delay_s - offload.delay_s
    energy_benefit = local.energy_j - offload.energy_j
    return BenefitReport(
        delay_benefit_s=delay_benefit,
        energy_benefit_j=energy_benefit,
        overall=lambda_ * delay_benefit + (1.0 - lambda_) * energy_benefit,
        lambda_=lambda_,
    )


def decide(benefit: BenefitReport) -> int:
    """1 (offload) only for a strictly positive overall benefit"""
    return 1 if benefit.overall > 0 else 0


def score_server(d_now: float, d_next: float, alpha: float, overall_benefit: float) -> float:
    return (d_now - d_next) + alpha * overall_benefit


def mobility_alpha(speed_mps: float, alpha0: float, v_ref_mps: float) -> float:
    """Benefit weight, growing linearly with the terminal's speed"""
    return alpha0 * speed_mps / v_ref_mps


def rank_servers(candidates: Sequence[Candidate], alpha: float) -> Tuple[ServerScore, ...]:
    scores = [
        ServerScore(
            server_id=c.server_id,
            score=score_server(c.d_now_m, c.d_next_m, alpha, c.benefit.overall),
            d_now_m=c.d_now_m,
            d_next_m=c.d_next_m,
            alpha=alpha,
        )
        for c in candidates
    ]
    return tuple(sorted(scores, key=lambda s: (-s.score, s.server_id)))


def select_server(candidates: Sequence[Candidate], alpha: float) -> Optional[int]:
    """
    Highest score wins, lowest server id on ties

    Returns:
        The chosen server id, or None when no server covers the terminal
    """
    if not candidates:
        return None
    return rank_servers(candidates, alpha)[0].server_id


def plan_offload(candidates: Sequence[Candidate], alpha: float) -> OffloadDecision:
    """
    Two-dimensional decision for one task

    Only candidates with a positive benefit may be chosen; with none left
    the task stays local.
    """
    worthwhile = [c for c in candidates if decide(c.benefit) == 1]
    server_id = select_server(worthwhile, alpha)
    if server_id is None:
        return LOCAL
    logger.debug(f"Offloading to server {server_id} among {len(worthwhile)} worthwhile candidates")
    return OffloadDecision(d=1, chosen_server=server_id)
