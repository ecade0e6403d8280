"""Per-slot MAC pipeline: PF selection, power/MCS downgrade, the budget
enforcement strategies (resource-limiting walk or water-filled powers),
and round-robin PRB placement."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .mcs import PRB_BANDWIDTH_HZ, McsTable
from .waterfill import InfeasibleBudgetError, PowerUser, RateCurve, allocate

STRATEGIES = ("NoControl", "RL", "PL", "PL-R")
PRB_RATE_SCALE = PRB_BANDWIDTH_HZ / math.log(2.0)  # bits/s per unit log(1+SINR)


@dataclass(frozen=True)
class SchedStrategy:
    kind: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def uses_refinement(self) -> bool:
        return self.kind == "PL-R"


@dataclass
class UeSchedState:
    """Scheduler-facing view of one active UE for the current slot."""

    ue_id: int
    buffer_bits: float
    avg_tput_bps: float
    sinr_db: float      # estimated SINR per PRB at full power
    beam_id: int
    sinr_slope: float   # linear SINR per watt of per-PRB power

    def __post_init__(self):
        if self.buffer_bits < 0:
            raise ValueError("buffer_bits must be >= 0")
        if self.avg_tput_bps <= 0:
            raise ValueError("avg_tput_bps must be > 0")
        if self.sinr_slope <= 0:
            raise ValueError("sinr_slope must be > 0")


@dataclass(frozen=True)
class UePlan:
    """One UE's slot grant: PRBs, per-PRB power, rate at the chosen MCS."""

    ue_id: int
    beam_id: int
    num_prbs: int
    mcs_index: int
    power_w: float
    rate_per_prb_bps: float


def select_ues(active: list[UeSchedState], max_n: int, table: McsTable,
               rank: float = 1.0) -> list[UeSchedState]:
    """Up to max_n backlogged UEs by proportional-fair ratio, ties by ue_id."""
    scored = []
    for ue in active:
        if ue.buffer_bits <= 0:
            continue
        entry = table.select(ue.sinr_db)
        if entry is None:
            continue  # undecodable even at full power
        inst = entry.rate_per_prb_bps(rank)
        scored.append((-inst / ue.avg_tput_bps, ue.ue_id, ue))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [t[2] for t in scored[:max_n]]


def _prbs_needed(buffer_bits: float, rate_per_prb_bps: float, slot_s: float) -> int:
    return max(1, math.ceil(buffer_bits / (rate_per_prb_bps * slot_s)))


def nominal_plan(selected: list[UeSchedState], total_prbs: int, table: McsTable,
                 p_max: float, slot_s: float, rank: float = 1.0) -> list[UePlan]:
    """Full-power grants at the channel's best MCS, buffers sized in PRBs,
    truncated in priority order when demand exceeds the carrier."""
    plans = []
    left = total_prbs
    for ue in selected:
        if left <= 0:
            break
        entry = table.select(ue.sinr_db)
        if entry is None or ue.buffer_bits <= 0:
            continue
        want = _prbs_needed(ue.buffer_bits, entry.rate_per_prb_bps(rank), slot_s)
        a = min(want, left)
        left -= a
        plans.append(UePlan(ue.ue_id, ue.beam_id, a, entry.index, p_max,
                            entry.rate_per_prb_bps(rank)))
    return plans


def downgrade_mcs_power(selected: list[UeSchedState], total_prbs: int, table: McsTable,
                        p_max: float, slot_s: float, rank: float = 1.0) -> list[UePlan]:
    """Spend spare PRBs on power reduction: step each UE's MCS down as long as
    the expanded grant still fits the carrier, cutting power by the freed SINR
    margin. With no spare PRBs this is exactly the nominal plan."""
    plans = nominal_plan(selected, total_prbs, table, p_max, slot_s, rank)
    if not plans:
        return plans
    by_ue = {ue.ue_id: ue for ue in selected}
    spare = total_prbs - sum(p.num_prbs for p in plans)
    nominal_idx = {p.ue_id: p.mcs_index for p in plans}
    changed = True
    while changed and spare > 0:
        changed = False
        for i, plan in enumerate(plans):
            lower = table.next_lower(plan.mcs_index)
            if lower is None:
                continue
            ue = by_ue[plan.ue_id]
            want = _prbs_needed(ue.buffer_bits, lower.rate_per_prb_bps(rank), slot_s)
            grow = want - plan.num_prbs
            if grow <= spare:
                spare -= grow
                delta = table.delta_db(nominal_idx[plan.ue_id], lower.index)
                plans[i] = replace(
                    plan,
                    num_prbs=want,
                    mcs_index=lower.index,
                    power_w=p_max * 10.0 ** (-delta / 10.0),
                    rate_per_prb_bps=lower.rate_per_prb_bps(rank),
                )
                changed = True
    return plans


def apply_rl(plans: list[UePlan], gains: dict[int, float], budget_b: float) -> list[UePlan]:
    """Greedy full-power walk: grant PRBs in order while the running worst-case
    spend stays within the budget; trim the first overflowing UE, zero the rest."""
    out = []
    spent = 0.0
    for plan in plans:
        cost_per_prb = plan.power_w * gains[plan.ue_id]
        full_cost = plan.num_prbs * cost_per_prb
        if spent + full_cost <= budget_b:
            out.append(plan)
            spent += full_cost
        else:
            fit = int((budget_b - spent) / cost_per_prb)
            fit = min(fit, plan.num_prbs)
            if fit >= 1:
                out.append(replace(plan, num_prbs=fit))
            break
    return out


def apply_pl(plans: list[UePlan], states: dict[int, UeSchedState],
             gains: dict[int, float], budget_b: float, alpha: float,
             table: McsTable, slot_s: float, rank: float = 1.0) -> list[UePlan]:
    """Water-fill per-PRB powers under the slot budget, then re-select each
    UE's MCS at the power actually granted. Infeasible budgets shed the
    lowest-priority UE and retry."""
    work = list(plans)
    lowest = table.lowest()
    while work:
        users = []
        for plan in work:
            st = states[plan.ue_id]
            p_min = 10.0 ** (lowest.min_sinr_db / 10.0) / st.sinr_slope
            p_min = min(p_min, plan.power_w)
            users.append(PowerUser(
                ue_id=plan.ue_id,
                num_prbs=plan.num_prbs,
                max_gain=gains[plan.ue_id],
                rate=RateCurve(PRB_RATE_SCALE * rank, 1.0 / st.sinr_slope),
                p_min=p_min,
                p_max=plan.power_w,
            ))
        try:
            powers = allocate(users, budget_b, alpha)
        except InfeasibleBudgetError:
            work = work[:-1]  # shed the lowest-priority UE and retry
            continue
        out = []
        for plan in work:
            p = powers[plan.ue_id]
            sinr_db = 10.0 * math.log10(p * states[plan.ue_id].sinr_slope)
            entry = table.select(sinr_db)
            if entry is None:
                continue  # below the table even at p_min rounding: skip
            if entry.index > plan.mcs_index:
                # surplus decode margin never re-upgrades past the grant's MCS,
                # so a slack budget reproduces the downgraded plan exactly
                entry = table.entry(plan.mcs_index)
            out.append(replace(plan, power_w=p, mcs_index=entry.index,
                               rate_per_prb_bps=entry.rate_per_prb_bps(rank)))
        return out
    return []


def allocate_prbs(plans: list[UePlan], total_prbs: int, cursor: int) -> tuple[list[tuple[int, int, int]], int]:
    """Contiguous (ue_id, start, length) ranges placed cyclically from the
    cursor; ranges may wrap modulo the carrier. Returns ranges and the
    advanced cursor."""
    total = sum(p.num_prbs for p in plans)
    if total > total_prbs:
        raise ValueError(f"over-subscribed slot: {total} > {total_prbs} PRBs")
    ranges = []
    pos = cursor % total_prbs if total_prbs else 0
    for plan in plans:
        if plan.num_prbs == 0:
            continue
        ranges.append((plan.ue_id, pos, plan.num_prbs))
        pos = (pos + plan.num_prbs) % total_prbs
    return ranges, pos
