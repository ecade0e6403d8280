"""Desk-scale downlink system simulator.

Hexagonal sites with 120 deg sectors, log-distance pathloss with lognormal
shadowing, wideband-average co-channel interference read from the previous
scheduled slot, FTP-style packet traffic, and the per-slot MAC pipeline with
EIRP budget enforcement and ledger bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .budget import (
    BudgetConfig,
    PeriodBudget,
    outer_loop_cap,
    refined_slot_budget,
    slot_budget,
    window_headroom,
)
from .emf import (
    MAX_POWER_PER_PRB_W,
    TOTAL_PRBS,
    BeamCodebook,
    SegmentLedger,
    SegmentSet,
    UeAllocation,
)
from .mcs import default_table
from .scheduler import (
    PRB_RATE_SCALE,
    SchedStrategy,
    UePlan,
    UeSchedState,
    allocate_prbs,
    apply_pl,
    downgrade_mcs_power,
    nominal_plan,
    select_ues,
)

SLOT_SECONDS = 5e-4  # 30 kHz numerology
ENFORCE_BACKOFF = 1e-9  # relative shave on caps so solver tolerance stays inside


@dataclass
class Scenario:
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

    def validate(self):
        if self.num_sites < 1 or self.sectors_per_site < 1:
            raise ValueError("num_sites and sectors_per_site must be >= 1")
        if self.inter_site_distance_m <= 0:
            raise ValueError("inter_site_distance_m must be > 0")
        if self.packet_size_bits <= 0:
            raise ValueError("packet_size_bits must be > 0")
        if self.reading_time_ms < 0:
            raise ValueError("reading_time_ms must be >= 0")
        if self.sim_duration_slots < 1:
            raise ValueError("sim_duration_slots must be >= 1")
        if self.num_ues < 0:
            raise ValueError("num_ues must be >= 0")
        if self.min_ue_distance_m <= 0:
            raise ValueError("min_ue_distance_m must be > 0")


@dataclass
class ChannelModel:
    pathloss_exponent: float = 3.7
    pathloss_intercept_db: float = 58.0
    shadowing_sigma_db: float = 6.0
    noise_per_prb_w: float = 7.24e-15  # -111.4 dBm: thermal + 7 dB noise figure
    rank: float = 2.0

    def validate(self):
        if self.pathloss_exponent <= 0:
            raise ValueError("pathloss_exponent must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.noise_per_prb_w <= 0:
            raise ValueError("noise_per_prb_w must be > 0")
        if not 1.0 <= self.rank <= 4.0:
            raise ValueError("rank in [1, 4]")

    def pathloss_db(self, dist_m):
        return self.pathloss_intercept_db + 10.0 * self.pathloss_exponent * np.log10(dist_m)


@dataclass
class EmfConfig:
    period_slots: int = 200
    window_periods: int = 8
    rho: float = 0.25           # linear average-EIRP reduction target
    epsilon: float = 0.9
    rho_star: float = 0.1
    guard_fraction: float = 0.1  # b* as a fraction of the active period cap
    budget_mode: str = "fixed"
    floor_mode: str = "strict"
    n_az_segments: int = 1
    n_el_segments: int = 1
    grid_resolution_deg: float = 1.0

    def validate(self):
        if self.period_slots < 1 or self.window_periods < 1:
            raise ValueError("period_slots and window_periods must be >= 1")
        if not 0 < self.rho <= 1:
            raise ValueError("rho in (0,1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon in [0,1]")
        if not 0 < self.rho_star < 1:
            raise ValueError("rho_star in (0,1)")
        if not 0 < self.guard_fraction <= 1:
            raise ValueError("guard_fraction in (0,1]")
        if self.budget_mode not in ("fixed", "sliding"):
            raise ValueError("budget_mode in {fixed, sliding}")
        if self.floor_mode not in ("allow-overshoot", "strict"):
            raise ValueError("floor_mode in {allow-overshoot, strict}")
        if self.grid_resolution_deg <= 0:
            raise ValueError("grid_resolution_deg must be > 0")


@dataclass
class SchedConfig:
    strategy: str = "NoControl"
    alpha: float = 1.0
    max_ues_per_slot: int = 8
    pf_time_constant_slots: float = 100.0
    tdd_dl_slots: int = 4
    tdd_ul_slots: int = 1

    def validate(self):
        SchedStrategy(self.strategy, self.alpha)  # reuses the same checks
        if self.max_ues_per_slot < 1:
            raise ValueError("max_ues_per_slot must be >= 1")
        if self.pf_time_constant_slots < 1:
            raise ValueError("pf_time_constant_slots must be >= 1")
        if self.tdd_dl_slots < 1 or self.tdd_ul_slots < 0:
            raise ValueError("tdd pattern needs >= 1 DL slot and >= 0 UL slots")


@dataclass
class SimConfig:
    scenario: Scenario = field(default_factory=Scenario)
    channel: ChannelModel = field(default_factory=ChannelModel)
    emf: EmfConfig = field(default_factory=EmfConfig)
    sched: SchedConfig = field(default_factory=SchedConfig)

    def validate(self):
        self.scenario.validate()
        self.channel.validate()
        self.emf.validate()
        self.sched.validate()

    @classmethod
    def desk(cls) -> "SimConfig":
        return cls()

    @classmethod
    def table1(cls) -> "SimConfig":
        """Full-scale benchmark layout: 7 sites / 21 cells, long runtime."""
        cfg = cls()
        cfg.scenario = dc_replace(cfg.scenario, num_sites=7, num_ues=210,
                                  sim_duration_slots=20000)
        cfg.channel = dc_replace(cfg.channel, rank=4.0)
        return cfg


@dataclass
class Topology:
    site_xy: np.ndarray
    cell_site: np.ndarray
    cell_boresight: np.ndarray
    ue_xy: np.ndarray
    serving_cell: np.ndarray
    dist_3d: np.ndarray    # (n_cells, n_ues)
    az_local: np.ndarray   # (n_cells, n_ues), wrapped to [-pi, pi)
    elevation: np.ndarray  # (n_cells, n_ues)

    @property
    def n_cells(self) -> int:
        return self.cell_site.size

    @property
    def n_ues(self) -> int:
        return self.serving_cell.size


def _hex_lattice(n: int, isd: float) -> np.ndarray:
    """First n points of the triangular lattice by (radius, angle) order."""
    a1 = np.array([1.0, 0.0])
    a2 = np.array([0.5, math.sqrt(3.0) / 2.0])
    pts = []
    reach = int(math.ceil(math.sqrt(n))) + 2
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            p = i * a1 + j * a2
            pts.append((float(np.hypot(p[0], p[1])),
                        math.atan2(p[1], p[0]) % (2.0 * math.pi), tuple(p)))
    pts.sort(key=lambda t: (round(t[0], 9), round(t[1], 9)))
    return np.array([p for _, _, p in pts[:n]]) * isd


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def build_topology(scenario: Scenario, rng: np.random.Generator) -> Topology:
    """Hex site grid, equal sectors per site, uniform per-sector UE drops."""
    scenario.validate()
    sites = _hex_lattice(scenario.num_sites, scenario.inter_site_distance_m)
    n_cells = scenario.num_sites * scenario.sectors_per_site
    cell_site = np.repeat(np.arange(scenario.num_sites), scenario.sectors_per_site)
    bores = _wrap_angle(np.array([
        2.0 * math.pi * s / scenario.sectors_per_site
        for _ in range(scenario.num_sites) for s in range(scenario.sectors_per_site)
    ]))

    radius = scenario.inter_site_distance_m / math.sqrt(3.0)
    half_width = math.pi / scenario.sectors_per_site
    per_cell = [scenario.num_ues // n_cells] * n_cells
    for k in range(scenario.num_ues % n_cells):
        per_cell[k] += 1
    ue_xy = np.empty((scenario.num_ues, 2))
    serving = np.empty(scenario.num_ues, dtype=np.int64)
    u = 0
    for c in range(n_cells):
        for _ in range(per_cell[c]):
            r = math.sqrt(rng.uniform(scenario.min_ue_distance_m ** 2, radius ** 2))
            theta = bores[c] + rng.uniform(-half_width, half_width)
            ue_xy[u] = sites[cell_site[c]] + r * np.array([math.cos(theta), math.sin(theta)])
            serving[u] = c
            u += 1

    dxy = ue_xy[None, :, :] - sites[cell_site][:, None, :]
    dist_2d = np.maximum(np.hypot(dxy[:, :, 0], dxy[:, :, 1]), 1.0)
    dh = scenario.bs_height_m - scenario.ue_height_m
    dist_3d = np.hypot(dist_2d, dh)
    az = np.arctan2(dxy[:, :, 1], dxy[:, :, 0])
    az_local = _wrap_angle(az - bores[:, None])
    el = -np.arctan2(dh, dist_2d)
    return Topology(sites, cell_site, bores, ue_xy, serving, dist_3d, az_local, el)


def compute_sinr(power_w: float, link_gain: float, noise_w: float,
                 interference_w: float = 0.0) -> float:
    """SINR in dB for a per-PRB power through a linear link gain."""
    if power_w <= 0 or link_gain <= 0 or noise_w <= 0:
        raise ValueError("power, gain, and noise must be > 0")
    return 10.0 * math.log10(power_w * link_gain / (noise_w + interference_w))


@dataclass
class Metrics:
    cell_tput_bps: np.ndarray
    cell_bits: np.ndarray
    ue_bits: np.ndarray
    ue_packet_tput_bps: np.ndarray  # nan when no packet completed post-warmup
    packets_completed: int
    compliance_ok: bool
    max_window_ratio: float
    mcs_rate_loss: float
    warmup_slots: int
    duration_slots: int
    dl_slots: int
    ledgers: list  # [cell][segment] SegmentLedger
    topology: Topology

    @property
    def total_bits(self) -> float:
        return float(np.sum(self.ue_bits))

    @property
    def mean_cell_tput_bps(self) -> float:
        return float(np.mean(self.cell_tput_bps))

    @property
    def mean_ue_tput_bps(self) -> float:
        vals = self.ue_packet_tput_bps[~np.isnan(self.ue_packet_tput_bps)]
        return float(np.mean(vals)) if vals.size else 0.0


class _TrafficState:
    """FTP-style buffers: a fresh packet lands a fixed reading time after the
    previous one completes; initial arrivals staggered inside one reading."""

    def __init__(self, n_ues: int, packet_bits: float, reading_slots: int,
                 rng: np.random.Generator):
        self.packet_bits = packet_bits
        self.reading_slots = reading_slots
        self.buffer = np.zeros(n_ues)
        self.arrival_slot = np.full(n_ues, -1, dtype=np.int64)
        hold = max(reading_slots, 1)
        self.next_arrival = rng.integers(0, hold, size=n_ues)

    def step_arrivals(self, t: int) -> None:
        # catch-up match so a zero reading time (next arrival scheduled for the
        # slot that just completed) lands next slot instead of never
        due = (self.next_arrival >= 0) & (self.next_arrival <= t)
        self.buffer[due] += self.packet_bits
        self.arrival_slot[due] = t
        self.next_arrival[due] = -1

    def deliver(self, u: int, bits: float, t: int) -> float:
        """Drain bits; returns elapsed slots on packet completion, else 0."""
        self.buffer[u] -= bits
        if self.buffer[u] <= 1e-9:
            self.buffer[u] = 0.0
            arrived = int(self.arrival_slot[u])
            self.next_arrival[u] = t + self.reading_slots
            self.arrival_slot[u] = -1
            return float(t - arrived + 1)
        return 0.0


def _build_radio(cfg: SimConfig, topo: Topology, rng_shadow: np.random.Generator):
    """Codebook, segments, serving links, and per-cell interference tables."""
    emf = cfg.emf
    cb = BeamCodebook.sector_default()
    segset = SegmentSet(
        cb,
        n_az_segments=emf.n_az_segments,
        n_el_segments=emf.n_el_segments,
        grid_resolution=math.radians(emf.grid_resolution_deg),
        threshold_scale=emf.rho,
    )
    n_cells, n_ues = topo.n_cells, topo.n_ues
    shadow_db = rng_shadow.normal(0.0, cfg.channel.shadowing_sigma_db,
                                  size=(n_cells, n_ues))
    pl_lin = 10.0 ** ((-cfg.channel.pathloss_db(topo.dist_3d) + shadow_db) / 10.0)

    serve_beam = np.empty(n_ues, dtype=np.int64)
    serve_gain = np.empty(n_ues)
    for u in range(n_ues):
        c = int(topo.serving_cell[u])
        az, el = float(topo.az_local[c, u]), float(topo.elevation[c, u])
        b = cb.best_beam(az, el)
        serve_beam[u] = b
        serve_gain[u] = float(cb.gain(b, az, el)) * pl_lin[c, u]

    # beam gain of every cell's codebook toward every UE (for interference)
    beam_gain = np.empty((n_cells, cb.n_beams, n_ues))
    for c in range(n_cells):
        for b in range(cb.n_beams):
            beam_gain[c, b] = cb.gain(b, topo.az_local[c], topo.elevation[c])

    beam_segment = np.array([segset.assign_segment(b) for b in range(cb.n_beams)],
                            dtype=np.int64)
    return cb, segset, pl_lin, serve_beam, serve_gain, beam_gain, beam_segment


def _interference(tx, beam_gain, pl_lin, serving, n_ues) -> np.ndarray:
    """Wideband-average co-channel power per PRB from one slot's grants."""
    n_cells = len(tx)
    contrib = np.zeros((n_cells, n_ues))
    for c in range(n_cells):
        for beam, watts in tx[c]:
            contrib[c] += (watts / TOTAL_PRBS) * beam_gain[c, beam]
        contrib[c] *= pl_lin[c]
    total = contrib.sum(axis=0)
    own = contrib[serving, np.arange(n_ues)]
    return total - own


def _apply_rl_multi(plans: list[UePlan], gain_rows: dict[int, np.ndarray],
                    caps: np.ndarray) -> list[UePlan]:
    """Resource-limiting walk against one running spend bound per segment."""
    out = []
    spent = np.zeros_like(caps)
    for plan in plans:
        per_prb = plan.power_w * gain_rows[plan.ue_id]
        full = spent + plan.num_prbs * per_prb
        if np.all(full <= caps):
            out.append(plan)
            spent = full
            continue
        with np.errstate(divide="ignore"):
            room = np.where(per_prb > 0, (caps - spent) / per_prb, np.inf)
        fit = min(int(np.floor(room.min())), plan.num_prbs)
        if fit >= 1:
            out.append(dc_replace(plan, num_prbs=fit))
        break
    return out


def _pl_per_segment(plans, selected, caps, alpha, table, rank, beam_segment,
                    ghat) -> list[UePlan]:
    """Water-fill each segment's users under that segment's cap."""
    states = {st.ue_id: st for st in selected}
    by_seg: dict[int, list[UePlan]] = {}
    for plan in plans:
        by_seg.setdefault(int(beam_segment[plan.beam_id]), []).append(plan)
    out = []
    for s, group in sorted(by_seg.items()):
        gains = {p.ue_id: float(ghat[p.ue_id]) for p in group}
        out.extend(apply_pl(group, states, gains, float(caps[s]), alpha, table,
                            SLOT_SECONDS, rank))
    return out


def _leak_guard(plans, caps, gain_rows, table, states, rank) -> list[UePlan]:
    """Scale powers down if cross-segment sidelobe spend would breach any cap;
    inert with a single segment (the per-segment solve already fits)."""
    if not plans or caps.shape[0] == 1:
        return plans
    bound = np.zeros(caps.shape[0])
    for p in plans:
        bound += p.num_prbs * p.power_w * gain_rows[p.ue_id]
    with np.errstate(divide="ignore"):
        f = float(np.min(np.where(bound > 0, caps / bound, np.inf)))
    if f >= 1.0:
        return plans
    out = []
    for p in plans:
        power = p.power_w * f
        entry = table.select(10.0 * math.log10(power * states[p.ue_id].sinr_slope))
        if entry is None:
            continue
        if entry.index > p.mcs_index:
            entry = table.entry(p.mcs_index)
        out.append(dc_replace(p, power_w=power, mcs_index=entry.index,
                              rate_per_prb_bps=entry.rate_per_prb_bps(rank)))
    return out


def run(cfg: SimConfig) -> Metrics:
    """Full system run: returns throughput, packet, and compliance metrics."""
    cfg.validate()
    sc, ch, emf, sd = cfg.scenario, cfg.channel, cfg.emf, cfg.sched
    strategy = SchedStrategy(sd.strategy, sd.alpha)
    controlled = strategy.kind != "NoControl"
    table = default_table()

    rng_drop = np.random.default_rng([sc.seed, 11])
    rng_shadow = np.random.default_rng([sc.seed, 13])
    rng_traffic = np.random.default_rng([sc.seed, 17])

    topo = build_topology(sc, rng_drop)
    cb, segset, pl_lin, serve_beam, serve_gain, beam_gain, beam_segment = _build_radio(
        cfg, topo, rng_shadow)
    n_cells, n_ues, n_segs = topo.n_cells, topo.n_ues, len(segset)
    cell_ues = [np.flatnonzero(topo.serving_cell == c) for c in range(n_cells)]

    reading_slots = int(round(sc.reading_time_ms * 1e-3 / SLOT_SECONDS))
    traffic = _TrafficState(n_ues, sc.packet_size_bits, reading_slots, rng_traffic)

    # ledgers carry globally unique segment ids (cell-major) so a multi-cell
    # trace export stays unambiguous under the fixed CSV schema
    ledgers = [[SegmentLedger(dc_replace(seg, segment_id=c * n_segs + seg.segment_id),
                              emf.period_slots, emf.window_periods)
                for seg in segset.segments] for c in range(n_cells)]
    budgets: list[list[PeriodBudget]] = []
    bcfgs: list[list[BudgetConfig]] = []
    if controlled:
        for c in range(n_cells):
            row_b, row_c = [], []
            for s, seg in enumerate(segset.segments):
                gamma = outer_loop_cap(ledgers[c][s], emf.budget_mode, rho=emf.rho)
                bc = BudgetConfig(
                    period_slots=emf.period_slots,
                    epsilon=emf.epsilon,
                    rho_star=emf.rho_star,
                    guard_bstar=max(gamma * emf.guard_fraction, seg.max_eirp_w * 1e-12),
                    refinement_enabled=strategy.uses_refinement,
                    floor_mode=emf.floor_mode,
                )
                bc.validate_against(gamma, seg.max_eirp_w)
                row_b.append(PeriodBudget(gamma=gamma))
                row_c.append(bc)
            budgets.append(row_b)
            bcfgs.append(row_c)

    def close_periods(t: int) -> None:
        if (t + 1) % emf.period_slots != 0:
            return
        for c in range(n_cells):
            for s in range(n_segs):
                ledgers[c][s].close_period()
                if controlled:
                    gamma = outer_loop_cap(ledgers[c][s], emf.budget_mode, rho=emf.rho)
                    bcfgs[c][s].guard_bstar = max(gamma * emf.guard_fraction,
                                                  segset.segments[s].max_eirp_w * 1e-12)
                    budgets[c][s].start_period(gamma)

    # per-UE worst-case gain toward its own segment (budget accounting) and
    # the full per-segment gain row (cross-segment enforcement)
    ghat = np.array([segset.max_gain[serve_beam[u], beam_segment[serve_beam[u]]]
                     for u in range(n_ues)])
    gain_rows = {u: segset.max_gain[serve_beam[u]] for u in range(n_ues)}

    avg_tput = np.full(n_ues, 1e4)
    tau = sd.pf_time_constant_slots
    cursors = [0] * n_cells
    interference = np.zeros(n_ues)

    warmup = emf.window_periods * emf.period_slots
    frame = sd.tdd_dl_slots + sd.tdd_ul_slots
    ue_bits = np.zeros(n_ues)
    cell_bits = np.zeros(n_cells)
    ue_pkt_samples: list[list[float]] = [[] for _ in range(n_ues)]
    packets = 0
    dl_slots = 0
    loss_stair = 0.0
    loss_cont = 0.0

    for t in range(sc.sim_duration_slots):
        traffic.step_arrivals(t)
        if (t % frame) >= sd.tdd_dl_slots:  # UL slot: no scheduling, no spend
            for c in range(n_cells):
                for s in range(n_segs):
                    ledgers[c][s].record_slot(0.0)
                    if controlled:
                        budgets[c][s].charge(0.0)
            close_periods(t)
            continue
        dl_slots += 1

        new_tx: list[list[tuple[int, float]]] = [[] for _ in range(n_cells)]
        slot_allocs: list[list[UeAllocation]] = [[] for _ in range(n_cells)]
        caps_record = np.full((n_cells, n_segs), np.nan)

        for c in range(n_cells):
            caps = None
            if controlled:
                caps = np.empty(n_segs)
                for s, seg in enumerate(segset.segments):
                    b = slot_budget(budgets[c][s], bcfgs[c][s], seg.max_eirp_w)
                    if strategy.uses_refinement:
                        b = refined_slot_budget(b, seg.max_eirp_w, bcfgs[c][s])
                    if emf.budget_mode == "sliding":
                        b = min(b, window_headroom(ledgers[c][s]))
                    caps[s] = b * (1.0 - ENFORCE_BACKOFF)
                caps_record[c] = caps

            active = []
            for u in cell_ues[c]:
                if traffic.buffer[u] <= 0:
                    continue
                slope = serve_gain[u] / (ch.noise_per_prb_w + interference[u])
                sinr_db = 10.0 * math.log10(MAX_POWER_PER_PRB_W * slope)
                active.append(UeSchedState(int(u), float(traffic.buffer[u]),
                                           float(avg_tput[u]), sinr_db,
                                           int(serve_beam[u]), slope))
            selected = select_ues(active, sd.max_ues_per_slot, table, ch.rank)
            plans: list[UePlan] = []
            if selected:
                if strategy.kind == "NoControl":
                    plans = nominal_plan(selected, TOTAL_PRBS, table,
                                         MAX_POWER_PER_PRB_W, SLOT_SECONDS, ch.rank)
                elif strategy.kind == "RL":
                    plans = nominal_plan(selected, TOTAL_PRBS, table,
                                         MAX_POWER_PER_PRB_W, SLOT_SECONDS, ch.rank)
                    plans = _apply_rl_multi(plans, gain_rows, caps)
                else:  # PL / PL-R
                    plans = downgrade_mcs_power(selected, TOTAL_PRBS, table,
                                                MAX_POWER_PER_PRB_W, SLOT_SECONDS,
                                                ch.rank)
                    plans = _pl_per_segment(plans, selected, caps, sd.alpha, table,
                                            ch.rank, beam_segment, ghat)
                    plans = _leak_guard(plans, caps, gain_rows, table,
                                        {st.ue_id: st for st in selected}, ch.rank)
            _, cursors[c] = allocate_prbs(plans, TOTAL_PRBS, cursors[c])

            by_ue = {st.ue_id: st for st in selected}
            served_bits: dict[int, float] = {}
            for plan in plans:
                slot_allocs[c].append(UeAllocation(plan.ue_id, plan.num_prbs,
                                                   plan.power_w, plan.beam_id,
                                                   plan.rate_per_prb_bps))
                new_tx[c].append((plan.beam_id, plan.num_prbs * plan.power_w))
                u = plan.ue_id
                drained = min(traffic.buffer[u],
                              plan.num_prbs * plan.rate_per_prb_bps * SLOT_SECONDS)
                served_bits[u] = drained
                if t >= warmup:
                    ue_bits[u] += drained
                    cell_bits[c] += drained
                elapsed = traffic.deliver(u, drained, t)
                if elapsed > 0.0:
                    packets += 1
                    if t >= warmup:
                        ue_pkt_samples[u].append(
                            sc.packet_size_bits / (elapsed * SLOT_SECONDS))
                cont = plan.num_prbs * PRB_RATE_SCALE * ch.rank * math.log1p(
                    plan.power_w * by_ue[u].sinr_slope)
                loss_cont += cont
                loss_stair += plan.num_prbs * plan.rate_per_prb_bps
            for u in cell_ues[c]:
                inst = served_bits.get(int(u), 0.0) / SLOT_SECONDS
                avg_tput[u] = max((1.0 - 1.0 / tau) * avg_tput[u] + inst / tau, 1.0)

        # consumption accounting after all cells scheduled
        for c in range(n_cells):
            cons = segset.consumption_all(slot_allocs[c])
            for s in range(n_segs):
                ledgers[c][s].record_slot(float(cons[s]), float(caps_record[c, s]))
                if controlled:
                    budgets[c][s].charge(float(cons[s]))
        interference = _interference(new_tx, beam_gain, pl_lin, topo.serving_cell,
                                     n_ues)
        close_periods(t)

    measured_slots = max(sc.sim_duration_slots - warmup, 1)
    span_s = measured_slots * SLOT_SECONDS
    pkt_tput = np.array([float(np.mean(s)) if s else np.nan for s in ue_pkt_samples])
    ratios = [led.max_actual_eirp() / led.segment.threshold_w
              for row in ledgers for led in row if led.periods]
    max_ratio = max(ratios) if ratios else 0.0
    return Metrics(
        cell_tput_bps=cell_bits / span_s,
        cell_bits=cell_bits,
        ue_bits=ue_bits,
        ue_packet_tput_bps=pkt_tput,
        packets_completed=packets,
        compliance_ok=max_ratio <= 1.0,
        max_window_ratio=max_ratio,
        mcs_rate_loss=(1.0 - loss_stair / loss_cont) if loss_cont > 0 else 0.0,
        warmup_slots=warmup,
        duration_slots=sc.sim_duration_slots,
        dl_slots=dl_slots,
        ledgers=ledgers,
        topology=topo,
    )
