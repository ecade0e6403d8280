"""Request/response schemas for the HTTP service.

Config sections mirror the flat config keys one-to-one; only fields the
caller sets explicitly are applied as overrides on top of the preset.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class ScenarioSpec(BaseModel):
    num_sites: int = 3
    sectors_per_site: int = 3
    inter_site_distance_m: float = 500.0
    num_ues: int = 90
    packet_size_bits: float = 1e6
    reading_time_ms: float = 50.0
    sim_duration_slots: int = 8000
    seed: int = 1
    min_ue_distance_m: float = 35.0
    bs_height_m: float = 25.0
    ue_height_m: float = 1.5


class ChannelSpec(BaseModel):
    pathloss_exponent: float = 3.7
    pathloss_intercept_db: float = 58.0
    shadowing_sigma_db: float = 6.0
    noise_per_prb_w: float = 7.24e-15
    rank: float = 2.0


class BudgetSpec(BaseModel):
    epsilon: float = 0.9
    rho_star: float = 0.1
    guard_bstar_fraction: float = 0.1
    period_slots: int = 200
    window_periods: int = 8
    budget_mode: str = "fixed"
    floor_mode: str = "strict"
    rho_db: float = -6.0


class SegmentsSpec(BaseModel):
    n_az: int = 1
    n_el: int = 1
    grid_resolution_deg: float = 1.0


class SchedulerSpec(BaseModel):
    strategy: str = "NoControl"
    alpha: float = 1.0
    max_ues_per_slot: int = 8
    pf_time_constant: float = 100.0
    tdd_dl_slots: int = 4
    tdd_ul_slots: int = 1


class SweepSpec(BaseModel):
    packet_mbits: list[float] = [0.25, 0.5, 2.0, 4.0]
    strategies: list[str] = ["NoControl", "RL", "PL", "PL-R"]
    rho_db: list[float] = [-3.0, -6.0]
    epsilon: list[float] = [0.9]
    seeds: list[int] = [1, 2, 3]


class ConfigSpec(BaseModel):
    """Preset or literal config text, plus per-section overrides."""

    preset: str = "desk"
    config_text: str | None = None
    scenario: ScenarioSpec | None = None
    channel: ChannelSpec | None = None
    budget: BudgetSpec | None = None
    segments: SegmentsSpec | None = None
    scheduler: SchedulerSpec | None = None
    sweep: SweepSpec | None = None


class AllocUser(BaseModel):
    ue_id: int
    num_prbs: int = Field(ge=1)
    max_gain: float = Field(gt=0.0)
    bandwidth_scale: float = Field(gt=0.0)
    noise: float = Field(gt=0.0)
    p_min: float = Field(gt=0.0)
    p_max: float = Field(gt=0.0)


class AllocationRequest(BaseModel):
    users: list[AllocUser]
    budget_b: float = Field(gt=0.0)
    alpha: float = 1.0


class AllocationResponse(BaseModel):
    powers: dict[int, float]
    water_level: float
    spend: float
    objective: float


class SlotBudgetRequest(BaseModel):
    gamma: float = Field(ge=0.0)
    consumed: float = Field(ge=0.0)
    slot_index: int = Field(ge=1)
    cstar: float = Field(gt=0.0)
    period_slots: int = Field(ge=1)
    epsilon: float = 0.9
    rho_star: float = 0.1
    guard_bstar: float = 1.0
    refinement_enabled: bool = False
    floor_mode: str = "strict"


class SlotBudgetResponse(BaseModel):
    budget_w: float
    refined_w: float | None = None


class RunRequest(BaseModel):
    config: ConfigSpec = ConfigSpec()
    out_dir: str
    q_mbits: float | None = None
    strategy: str | None = None
    rho_db: float | None = None
    epsilon: float | None = None
    seed: int | None = None


class RunResponse(BaseModel):
    key: str
    out_dir: str
    mean_cell_tput_bps: float
    mean_ue_tput_bps: float
    max_window_ratio: float
    compliance_ok: bool
    packets_completed: int
    total_bits: float
    dl_slots: int


class SweepRequest(BaseModel):
    config: ConfigSpec = ConfigSpec()
    out_dir: str


class FailureItem(BaseModel):
    key: str
    error: str


class SweepResponse(BaseModel):
    ok: bool
    compliance_all: bool
    n_runs: int
    n_failed: int
    failures: list[FailureItem]
    out_dir: str
