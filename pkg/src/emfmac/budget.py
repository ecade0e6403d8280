"""Per-period EIRP caps and per-slot budget spreading.

The outer loop granting the period cap is a compliant stand-in (plumbing):
"fixed" reproduces the benchmark setup (cap = rho * c* * K), "sliding"
grants exactly the headroom left in the W-period window, which enforces
the average-EIRP limit by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .emf import SegmentLedger

FLOOR_MODES = ("allow-overshoot", "strict")
BUDGET_MODES = ("fixed", "sliding")


@dataclass
class BudgetConfig:
    """Knobs for the slot-budget law: pacing slope, floor, refinement guard."""

    period_slots: int
    epsilon: float = 0.9
    rho_star: float = 0.1
    guard_bstar: float = 1.0
    refinement_enabled: bool = False
    floor_mode: str = "allow-overshoot"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon in [0,1]")
        if not 0.0 < self.rho_star < 1.0:
            raise ValueError("rho_star in (0,1)")
        if self.guard_bstar <= 0:
            raise ValueError("guard_bstar must be > 0")
        if self.period_slots < 1:
            raise ValueError("period_slots must be >= 1")
        if self.floor_mode not in FLOOR_MODES:
            raise ValueError(f"floor_mode must be one of {FLOOR_MODES}")

    def validate_against(self, gamma: float, cstar: float) -> None:
        """Floor feasibility: 0 < rho_star*c* < gamma/K for the active cap."""
        floor = self.rho_star * cstar
        if not 0.0 < floor < gamma / self.period_slots:
            raise ValueError(
                f"floor {floor:.6g} W must sit in (0, gamma/K = "
                f"{gamma / self.period_slots:.6g} W); adjust rho_star or the cap")


@dataclass
class PeriodBudget:
    """Running budget state for one segment's current period; k is 1-based."""

    gamma: float
    consumed: float = 0.0
    slot_index: int = 1

    def charge(self, consumption_w: float) -> None:
        if consumption_w < 0:
            raise ValueError("consumption must be >= 0")
        self.consumed += consumption_w
        self.slot_index += 1

    def start_period(self, gamma: float) -> None:
        self.gamma = gamma
        self.consumed = 0.0
        self.slot_index = 1


def outer_loop_cap(ledger: SegmentLedger, mode: str, rho: float = 0.25) -> float:
    """Period cap gamma (watt-slots) for the segment behind the ledger.

    fixed: rho * c* * K, the benchmark's constant power-reduction setup.
    sliding: whatever the W-period window can still absorb, so that a period
    spending within the cap keeps the window average below the threshold.
    """
    seg = ledger.segment
    if mode == "fixed":
        return rho * seg.max_eirp_w * ledger.period_slots
    if mode == "sliding":
        window_cap = seg.threshold_w * ledger.window_periods * ledger.period_slots
        recent = ledger.periods[-(ledger.window_periods - 1):] if ledger.window_periods > 1 else []
        return max(window_cap - sum(recent), 0.0)
    raise ValueError(f"budget mode must be one of {BUDGET_MODES}")


def _largest_within(consumed: float, gamma: float) -> float:
    """Largest b >= 0 with consumed + b <= gamma in float arithmetic."""
    b = gamma - consumed
    if b <= 0.0:
        return 0.0
    while consumed + b > gamma:
        b = math.nextafter(b, 0.0)
    return max(b, 0.0)


def slot_budget(pb: PeriodBudget, cfg: BudgetConfig, cstar: float) -> float:
    """Slot budget: paced share of gamma minus what the period already spent,
    floored at rho_star*c*. Strict mode additionally caps at the exact
    remaining period budget, so the period sum can never exceed gamma."""
    k, big_k = pb.slot_index, cfg.period_slots
    if not 1 <= k <= big_k:
        raise ValueError(f"slot index {k} outside [1, {big_k}]")
    paced = (1.0 - cfg.epsilon * (big_k - k) / big_k) * pb.gamma
    b = max(paced - pb.consumed, 0.0)
    b = max(b, cfg.rho_star * cstar)
    if cfg.floor_mode == "strict":
        b = min(b, _largest_within(pb.consumed, pb.gamma))
    return b


def refined_slot_budget(b: float, cstar: float, cfg: BudgetConfig) -> float:
    """Guard-threshold refinement: full c* while b is healthy (>= b*), decaying
    exponentially to rho_star*c* as b drops to zero."""
    if not cfg.refinement_enabled:
        raise ValueError("refinement is not enabled in this config")
    if b < 0:
        raise ValueError("slot budget must be >= 0")
    exponent = math.log(cfg.rho_star) * max(1.0 - b / cfg.guard_bstar, 0.0)
    return cstar * math.exp(exponent)


def pl_r_defaults(gamma: float, period_slots: int, floor_mode: str = "allow-overshoot") -> BudgetConfig:
    """Best-performing refinement setup: rho*=0.1, b*=gamma/10, epsilon=0.9."""
    return BudgetConfig(
        period_slots=period_slots,
        epsilon=0.9,
        rho_star=0.1,
        guard_bstar=gamma / 10.0,
        refinement_enabled=True,
        floor_mode=floor_mode,
    )


def window_headroom(ledger: SegmentLedger, safety: float = 1e-11) -> float:
    """Largest spend this slot keeping the current window sum below the
    threshold line, with a relative safety backoff absorbing float
    reassociation between this estimate and the ledger's own sums."""
    cap = ledger.segment.threshold_w * ledger.window_periods * ledger.period_slots
    cap *= 1.0 - safety
    recent = ledger.periods[-(ledger.window_periods - 1):] if ledger.window_periods > 1 else []
    used = sum(recent) + ledger.current_period_consumed
    return max(cap - used, 0.0)
