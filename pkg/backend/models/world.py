"""
World configuration models
Profiles, radio parameters, task generation and mobility settings
"""

from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class TerminalProfile(StrictModel):
    cpu_hz: float = Field(1e9, gt=0)
    bits_per_cycle: float = Field(0.005, gt=0)
    p_comp: float = Field(0.9, gt=0)
    p_idle: float = Field(0.1, gt=0)
    p_tran: float = Field(0.5, gt=0)


class ServerProfile(StrictModel):
    cpu_hz: float = Field(1e10, gt=0)
    bits_per_cycle: float = Field(0.002, gt=0)
    coverage_radius_m: float = Field(180.0, gt=0)


class RadioParams(StrictModel):
    bandwidth_hz: float = Field(5e6, gt=0)
    noise_power_w: float = Field(1e-11, gt=0)
    pathloss_exponent: float = Field(3.0, ge=2)
    reference_gain: float = Field(1e-3, gt=0)

    def with_bandwidth(self, bandwidth_hz: float) -> "RadioParams":
        return self.model_copy(update={"bandwidth_hz": bandwidth_hz})


class TaskGenConfig(StrictModel):
    p_gen: float = Field(0.6, ge=0, le=1)
    size_min_bits: int = Field(200_000, gt=0)
    size_max_bits: int = Field(2_000_000, gt=0)
    priority_min: int = Field(1, gt=0)
    priority_max: int = Field(5, gt=0)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.size_min_bits > self.size_max_bits:
            raise ValueError("size_min_bits must not exceed size_max_bits")
        if self.priority_min > self.priority_max:
            raise ValueError("priority_min must not exceed priority_max")
        return self


class MobilityConfig(StrictModel):
    speed_min_mps: float = Field(5.0, ge=0)
    speed_max_mps: float = Field(20.0, ge=0)
    alpha0: float = Field(0.1, ge=0)
    v_ref_mps: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def check_speed_range(self):
        if self.speed_min_mps > self.speed_max_mps:
            raise ValueError("speed_min_mps must not exceed speed_max_mps")
        return self


class WorldConfig(StrictModel):
    num_terminals: int = Field(10, ge=1)
    num_servers: int = Field(3, ge=1)
    total_slots: int = Field(200, ge=1)
    slot_s: float = Field(0.1, gt=0)
    arena_width_m: float = Field(500.0, gt=0)
    arena_height_m: float = Field(500.0, gt=0)
    server_positions: List[Tuple[float, float]] = [(125.0, 250.0), (250.0, 250.0), (375.0, 250.0)]
    terminal_profile: TerminalProfile = TerminalProfile()
    server_profile: ServerProfile = ServerProfile()
    radio: RadioParams = RadioParams()
    task_gen: TaskGenConfig = TaskGenConfig()
    mobility: MobilityConfig = MobilityConfig()
    lambda_: float = Field(0.5, ge=0, le=1, alias="lambda")

    @model_validator(mode="after")
    def check_servers(self):
        if len(self.server_positions) != self.num_servers:
            raise ValueError(
                f"server_positions has {len(self.server_positions)} entries, expected num_servers={self.num_servers}"
            )
        for x, y in self.server_positions:
            if not (0 <= x <= self.arena_width_m and 0 <= y <= self.arena_height_m):
                raise ValueError(f"server at ({x}, {y}) lies outside the arena")
        return self

    def with_terminals(self, num_terminals: int) -> "WorldConfig":
        return self.model_copy(update={"num_terminals": num_terminals})

    def with_speed(self, speed_mps: float) -> "WorldConfig":
        mobility = self.mobility.model_copy(update={"speed_min_mps": speed_mps, "speed_max_mps": speed_mps})
        return self.model_copy(update={"mobility": mobility})
