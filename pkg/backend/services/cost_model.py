"""
Cost Model
Delay, energy, rate and per-slot capacity formulas for terminals and servers

Everything here is a pure function of its inputs. Sizes are in bits, time in
seconds, power in watts.
"""

import math
from typing import List, Tuple, Union

from models.domain import BitQueue, CostPair, DrainResult, TaskSpec
from models.world import RadioParams, ServerProfile, TerminalProfile
from utils.exceptions import InvalidInputError, InvalidProfileError, LinkUnavailableError

Profile = Union[TerminalProfile, ServerProfile, RadioParams]


def _check_positive(profile: Profile, *fields: str) -> None:
    for name in fields:
        value = getattr(profile, name)
        if not value > 0:
            raise InvalidProfileError(f"{type(profile).__name__}.{name} must be positive, got {value}")


def _check_terminal(profile: TerminalProfile) -> None:
    _check_positive(profile, "cpu_hz", "bits_per_cycle", "p_comp", "p_idle", "p_tran")


def _check_server(server: ServerProfile) -> None:
    _check_positive(server, "cpu_hz", "bits_per_cycle", "coverage_radius_m")


def _check_task_bits(task_bits: float) -> None:
    if not task_bits > 0:
        raise InvalidInputError(f"task_bits must be positive, got {task_bits}")


def local_cost(profile: TerminalProfile, comp_queue_bits: float, task_bits: float) -> CostPair:
    """Queueing plus processing on the terminal itself"""
    _check_terminal(profile)
    _check_task_bits(task_bits)
    if comp_queue_bits < 0:
        raise InvalidInputError(f"comp_queue_bits must be nonnegative, got {comp_queue_bits}")

    delay = (comp_queue_bits + task_bits) / (profile.cpu_hz * profile.bits_per_cycle)
    return CostPair(delay_s=delay, energy_j=profile.p_comp * delay)


def achievable_rate(radio: RadioParams, p_tran: float, channel_gain: float) -> float:
    """Shannon rate W*log2(1 + P*|h|^2/sigma^2) in bits/s"""
    _check_positive(radio, "bandwidth_hz", "noise_power_w")
    if channel_gain < 0:
        raise InvalidInputError(f"channel_gain must be nonnegative, got {channel_gain}")
    if channel_gain == 0:
        return 0.0
    return radio.bandwidth_hz * math.log2(1.0 + p_tran * channel_gain / radio.noise_power_w)


def transmission_cost(profile: TerminalProfile, tran_queue_bits: float, task_bits: float, rate: float) -> CostPair:
    """Upload delay and transmit energy for the task behind the current offloading queue"""
    if not rate > 0:
        raise LinkUnavailableError(f"uplink rate is {rate}; process locally")
    delay = (tran_queue_bits + task_bits) / rate
    return CostPair(delay_s=delay, energy_j=profile.p_tran * delay)


def server_processing_delay(server: ServerProfile, server_queue_bits: float, task_bits: float) -> float:
    _check_server(server)
    _check_task_bits(task_bits)
    return (server_queue_bits + task_bits) / (server.cpu_hz * server.bits_per_cycle)


def offload_cost(
    profile: TerminalProfile,
    tran_queue_bits: float,
    task_bits: float,
    rate: float,
    server: ServerProfile,
    server_queue_bits: float,
) -> CostPair:
    """
    Total cost of offloading one task

    delay = upload delay + server delay; energy = transmit energy plus idle
    energy while the server works on the task. Downlink is not modelled.

    Raises:
        LinkUnavailableError: rate <= 0
    """
    _check_terminal(profile)
    _check_task_bits(task_bits)
    upload = transmission_cost(profile, tran_queue_bits, task_bits, rate)
    remote = server_processing_delay(server, server_queue_bits, task_bits)
    return CostPair(
        delay_s=upload.delay_s + remote,
        energy_j=upload.energy_j + profile.p_idle * remote,
    )


def slot_capacity_bits(profile: Union[TerminalProfile, ServerProfile], slot_s: float) -> float:
    """Bits one CPU can finish in a slot: pi * vartheta * f"""
    if not slot_s > 0:
        raise InvalidInputError(f"slot_s must be positive, got {slot_s}")
    return slot_s * profile.bits_per_cycle * profile.cpu_hz


def remaining_resources(server: ServerProfile, queue_bits: float, slot_s: float) -> float:
    """rho = 1 - L/(F*pi*vartheta); negative when the backlog exceeds one slot"""
    _check_server(server)
    return 1.0 - queue_bits / slot_capacity_bits(server, slot_s)


def _plan_drain(entries, head_done_bits: float, capacity_bits: float) -> Tuple[int, float, float]:
    """
    Walk the FIFO and decide what one slot finishes

    Whole tasks are taken while their remaining bits fit the budget. A task
    larger than the whole capacity may only advance when it is first in line
    with the full budget available; it then carries its progress into the
    next slot.

    Returns:
        (tasks completed, bits consumed, progress on the new head)
    """
    budget = capacity_bits
    progress = head_done_bits
    count = 0
    consumed = 0.0
    for task in entries:
        remaining = task.size_bits - progress
        if remaining <= budget:
            budget -= remaining
            consumed += remaining
            count += 1
            progress = 0.0
            continue
        if task.size_bits > capacity_bits and budget == capacity_bits:
            progress += budget
            consumed += budget
        break
    return count, consumed, progress


def preview_drain(queue: BitQueue, capacity_bits: float) -> DrainResult:
    """Non-mutating version of drain_queue_one_slot"""
    count, consumed, _ = _plan_drain(queue, queue.head_done_bits, capacity_bits)
    return DrainResult(processed=list(queue.entries[:count]), xi=count, consumed_bits=consumed)


def drain_queue_one_slot(queue: BitQueue, capacity_bits: float) -> DrainResult:
    """Remove the maximal FIFO prefix that fits in one slot of capacity"""
    if capacity_bits < 0:
        raise InvalidInputError(f"capacity_bits must be nonnegative, got {capacity_bits}")
    count, consumed, progress = _plan_drain(queue, queue.head_done_bits, capacity_bits)
    processed: List[TaskSpec] = [queue.pop() for _ in range(count)]
    queue.head_done_bits = progress
    return DrainResult(processed=processed, xi=count, consumed_bits=consumed)
