"""Angular segments, beam gain patterns, and EIRP consumption accounting.

All EIRP quantities are linear watts; angles are radians. dB conversions
happen at I/O boundaries only.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

TOTAL_PRBS = 273
MAX_POWER_PER_PRB_W = 0.73  # 53 dBm total over 273 PRBs


class UnknownBeamError(KeyError):
    pass


class LedgerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Direction:
    """Azimuth/elevation direction, radians.

    azimuth in [-pi, pi), elevation in [-pi/2, pi/2].
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not -math.pi <= self.azimuth < math.pi:
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi)")
        if not -math.pi / 2 <= self.elevation <= math.pi / 2:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class Segment:
    """Angular cell (half-open az/el box) with its exposure threshold.

    threshold_w is the sliding-window average EIRP limit for the segment;
    max_eirp_w is the largest EIRP any single slot can radiate into it
    (all PRBs, full power, best beam).
    """

    segment_id: int
    az_lo: float
    az_hi: float
    el_lo: float
    el_hi: float
    threshold_w: float = 1.0
    max_eirp_w: float = 1.0

    def __post_init__(self):
        if not (self.az_hi > self.az_lo and self.el_hi > self.el_lo):
            raise ValueError(f"segment {self.segment_id} has an empty angular range")
        if self.threshold_w <= 0 or self.max_eirp_w <= 0:
            raise ValueError(f"segment {self.segment_id}: thresholds must be positive")

    def contains(self, d: Direction) -> bool:
        return (self.az_lo <= d.azimuth < self.az_hi) and (self.el_lo <= d.elevation < self.el_hi)


@dataclass(frozen=True)
class UeAllocation:
    """One user's share of a slot: PRB count, per-PRB power, serving beam."""

    ue_id: int
    num_prbs: int
    power_per_prb_w: float
    beam_id: int
    rate_per_prb_bps: float = 0.0

    def __post_init__(self):
        if self.num_prbs < 0 or self.num_prbs > TOTAL_PRBS:
            raise ValueError(f"num_prbs {self.num_prbs} outside [0, {TOTAL_PRBS}]")
        if self.power_per_prb_w < 0:
            raise ValueError("power_per_prb_w must be >= 0")


def _array_factor_sq(n: int, spacing_wl: float, sin_x: np.ndarray, sin_x0: float) -> np.ndarray:
    """|Dirichlet kernel|^2 of an n-element uniform array, peak 1 at sin_x == sin_x0."""
    psi = 2.0 * np.pi * spacing_wl * (sin_x - sin_x0)
    half = 0.5 * psi
    num = np.sin(n * half)
    den = n * np.sin(half)
    af = np.where(np.abs(den) < 1e-12, 1.0, num / np.where(np.abs(den) < 1e-12, 1.0, den))
    return af * af


class BeamCodebook:
    """Synthetic DFT-style beams on a rectangular array, separable in az/el.

    gain(az, el) = g_elem * n_az*AF_az^2 * n_el*AF_el^2 with AF the uniform
    array factor, so the peak gain is g_elem * n_az * n_el.  The pattern is
    evaluated both pointwise (arbitrary directions) and on the sector grid
    shared with the segment set, keeping the per-segment max gains exactly
    consistent with grid-based consumption maxima.
    """

    def __init__(
        self,
        steer_az: np.ndarray,
        steer_el: np.ndarray,
        n_az_elems: int = 8,
        n_el_elems: int = 12,
        spacing_az_wl: float = 0.5,
        spacing_el_wl: float = 0.7,
        elem_gain_dbi: float = 5.2,
    ):
        steer_az = np.asarray(steer_az, dtype=float)
        steer_el = np.asarray(steer_el, dtype=float)
        if steer_az.shape != steer_el.shape:
            raise ValueError("steer_az and steer_el must align (one entry per beam)")
        self.steer_az = steer_az
        self.steer_el = steer_el
        self.n_beams = steer_az.size
        self.n_az_elems = n_az_elems
        self.n_el_elems = n_el_elems
        self.spacing_az_wl = spacing_az_wl
        self.spacing_el_wl = spacing_el_wl
        self.elem_gain = 10.0 ** (elem_gain_dbi / 10.0)
        # grid state, filled by attach_grid()
        self.grid_az: np.ndarray | None = None
        self.grid_el: np.ndarray | None = None
        self._faz: np.ndarray | None = None  # (n_beams, n_az) az factor incl. elem gain
        self._fel: np.ndarray | None = None  # (n_beams, n_el)

    @classmethod
    def sector_default(
        cls,
        n_beams_az: int = 16,
        n_beams_el: int = 8,
        az_span: float = math.radians(120.0),
        el_steer_lo: float = math.radians(-34.0),
        el_steer_hi: float = math.radians(-2.0),
        boresight_el: float = math.radians(-12.0),
    ) -> "BeamCodebook":
        """Codebook covering one 120 deg sector, steerings uniform in sin-space."""
        u_max = math.sin(az_span / 2.0)
        u = (np.arange(n_beams_az) + 0.5) / n_beams_az * 2.0 * u_max - u_max
        v_lo, v_hi = math.sin(el_steer_lo), math.sin(el_steer_hi)
        v = (np.arange(n_beams_el) + 0.5) / n_beams_el * (v_hi - v_lo) + v_lo
        az = np.repeat(np.arcsin(u), n_beams_el)
        el = np.tile(np.arcsin(v), n_beams_az)
        del boresight_el  # mechanical tilt is folded into the steering range
        return cls(az, el)

    def gain(self, beam_id: int, azimuth, elevation):
        """Pointwise gain of one beam; accepts scalars or arrays."""
        self._check_beam(beam_id)
        ga = self.elem_gain * self.n_az_elems * _array_factor_sq(
            self.n_az_elems, self.spacing_az_wl, np.sin(np.asarray(azimuth, dtype=float)),
            math.sin(self.steer_az[beam_id]))
        ge = self.n_el_elems * _array_factor_sq(
            self.n_el_elems, self.spacing_el_wl, np.sin(np.asarray(elevation, dtype=float)),
            math.sin(self.steer_el[beam_id]))
        return ga * ge

    def gain_at(self, beam_id: int, d: Direction) -> float:
        return float(self.gain(beam_id, d.azimuth, d.elevation))

    def best_beam(self, azimuth: float, elevation: float) -> int:
        """Beam with the highest gain toward the given direction."""
        ga = self.elem_gain * self.n_az_elems * _array_factor_sq(
            self.n_az_elems, self.spacing_az_wl, math.sin(azimuth), np.sin(self.steer_az))
        ge = self.n_el_elems * _array_factor_sq(
            self.n_el_elems, self.spacing_el_wl, math.sin(elevation), np.sin(self.steer_el))
        return int(np.argmax(ga * ge))

    def attach_grid(self, grid_az: np.ndarray, grid_el: np.ndarray) -> None:
        """Precompute per-beam az/el factors on the sector grid."""
        self.grid_az = np.asarray(grid_az, dtype=float)
        self.grid_el = np.asarray(grid_el, dtype=float)
        sin_az = np.sin(self.grid_az)
        sin_el = np.sin(self.grid_el)
        faz = np.empty((self.n_beams, sin_az.size))
        fel = np.empty((self.n_beams, sin_el.size))
        for b in range(self.n_beams):
            faz[b] = self.elem_gain * self.n_az_elems * _array_factor_sq(
                self.n_az_elems, self.spacing_az_wl, sin_az, math.sin(self.steer_az[b]))
            fel[b] = self.n_el_elems * _array_factor_sq(
                self.n_el_elems, self.spacing_el_wl, sin_el, math.sin(self.steer_el[b]))
        self._faz = faz
        self._fel = fel

    def grid_argmax_direction(self, beam_id: int) -> Direction:
        """Main-lobe direction of a beam, resolved on the attached grid."""
        self._require_grid()
        self._check_beam(beam_id)
        ia = int(np.argmax(self._faz[beam_id]))
        ie = int(np.argmax(self._fel[beam_id]))
        return Direction(float(self.grid_az[ia]), float(self.grid_el[ie]))

    def _check_beam(self, beam_id: int) -> None:
        if not 0 <= beam_id < self.n_beams:
            raise UnknownBeamError(f"beam {beam_id} not in codebook (0..{self.n_beams - 1})")

    def _require_grid(self) -> None:
        if self._faz is None:
            raise RuntimeError("codebook has no grid attached; call attach_grid() first")


class SegmentSet:
    """Partition of the sector's angular domain into az/el boxes plus the
    shared direction grid used for consumption maxima and max-gain tables."""

    def __init__(
        self,
        codebook: BeamCodebook,
        az_lo: float = math.radians(-60.0),
        az_hi: float = math.radians(60.0),
        el_lo: float = math.radians(-40.0),
        el_hi: float = math.radians(10.0),
        n_az_segments: int = 1,
        n_el_segments: int = 1,
        grid_resolution: float = math.radians(1.0),
        max_power_per_prb_w: float = MAX_POWER_PER_PRB_W,
        threshold_scale: float = 1.0,
    ):
        if grid_resolution <= 0:
            raise ValueError("grid_resolution must be > 0")
        self.az_lo, self.az_hi = az_lo, az_hi
        self.el_lo, self.el_hi = el_lo, el_hi
        self.codebook = codebook
        grid_az = np.arange(az_lo, az_hi - 1e-12, grid_resolution)
        grid_el = np.arange(el_lo, el_hi - 1e-12, grid_resolution)
        codebook.attach_grid(grid_az, grid_el)

        az_edges = np.linspace(az_lo, az_hi, n_az_segments + 1)
        el_edges = np.linspace(el_lo, el_hi, n_el_segments + 1)
        # grid-index slices per segment box; membership rule (lo <= x < hi)
        # matches locate() exactly so the boxes partition the grid
        self._az_slices = [
            slice(int(np.searchsorted(grid_az, az_edges[i], side="left")),
                  int(np.searchsorted(grid_az, az_edges[i + 1], side="left")))
            for i in range(n_az_segments)
        ]
        self._el_slices = [
            slice(int(np.searchsorted(grid_el, el_edges[j], side="left")),
                  int(np.searchsorted(grid_el, el_edges[j + 1], side="left")))
            for j in range(n_el_segments)
        ]
        for sl, what in [(self._az_slices, "azimuth"), (self._el_slices, "elevation")]:
            if any(s.stop <= s.start for s in sl):
                raise ValueError(
                    f"a segment contains no {what} grid direction; "
                    "widen the segments or refine grid_resolution")

        # per-(beam, segment) max gain, exact on the shared grid
        faz, fel = codebook._faz, codebook._fel
        n_seg = n_az_segments * n_el_segments
        self.max_gain = np.empty((codebook.n_beams, n_seg))
        segments = []
        sid = 0
        for i in range(n_az_segments):
            for j in range(n_el_segments):
                amax = faz[:, self._az_slices[i]].max(axis=1)
                emax = fel[:, self._el_slices[j]].max(axis=1)
                self.max_gain[:, sid] = amax * emax
                cstar = TOTAL_PRBS * max_power_per_prb_w * float(self.max_gain[:, sid].max())
                segments.append(Segment(
                    segment_id=sid,
                    az_lo=float(az_edges[i]), az_hi=float(az_edges[i + 1]),
                    el_lo=float(el_edges[j]), el_hi=float(el_edges[j + 1]),
                    threshold_w=threshold_scale * cstar,
                    max_eirp_w=cstar,
                ))
                sid += 1
        self.segments = segments
        self._seg_index = {(i, j): i * n_el_segments + j
                           for i in range(n_az_segments) for j in range(n_el_segments)}
        self.n_az_segments = n_az_segments
        self.n_el_segments = n_el_segments
        self._az_edges = az_edges
        self._el_edges = el_edges

    def __len__(self) -> int:
        return len(self.segments)

    def locate(self, d: Direction) -> Segment:
        """Segment containing a direction; exactly one by construction."""
        i = int(np.searchsorted(self._az_edges, d.azimuth, side="right") - 1)
        j = int(np.searchsorted(self._el_edges, d.elevation, side="right") - 1)
        if not (0 <= i < self.n_az_segments and 0 <= j < self.n_el_segments):
            raise ValueError("direction outside the sector's angular domain")
        return self.segments[self._seg_index[(i, j)]]

    def assign_segment(self, beam_id: int) -> int:
        """Segment holding the beam's main lobe (global grid argmax)."""
        return self.locate(self.codebook.grid_argmax_direction(beam_id)).segment_id

    def slot_pattern(self, allocs: list[UeAllocation]) -> np.ndarray:
        """Aggregate EIRP over the full sector grid for one slot, (n_az, n_el)."""
        cb = self.codebook
        cb._require_grid()
        n_az, n_el = cb.grid_az.size, cb.grid_el.size
        if not allocs:
            return np.zeros((n_az, n_el))
        rows = []
        cols = []
        for a in allocs:
            cb._check_beam(a.beam_id)
            w = a.num_prbs * a.power_per_prb_w
            rows.append(w * cb._faz[a.beam_id])
            cols.append(cb._fel[a.beam_id])
        return np.asarray(rows).T @ np.asarray(cols)

    def consumption_all(self, allocs: list[UeAllocation]) -> np.ndarray:
        """Per-segment slot consumption (grid max of the aggregate EIRP)."""
        pattern = self.slot_pattern(allocs)
        out = np.zeros(len(self.segments))
        for sid in range(len(self.segments)):
            i, j = divmod(sid, self.n_el_segments)
            out[sid] = pattern[self._az_slices[i], self._el_slices[j]].max(initial=0.0)
        return out

    def segment_consumption(self, allocs: list[UeAllocation], segment_id: int) -> float:
        return float(self.consumption_all(allocs)[segment_id])

    def consumption_upper_bound(self, allocs: list[UeAllocation], segment_id: int) -> float:
        """sum_u A_u P_u Ghat_u over users assigned (by main lobe) to the segment."""
        total = 0.0
        for a in allocs:
            self.codebook._check_beam(a.beam_id)
            total += a.num_prbs * a.power_per_prb_w * self.max_gain[a.beam_id, segment_id]
        return total


def eirp_at(allocs: list[UeAllocation], codebook: BeamCodebook, d: Direction) -> float:
    """Aggregate EIRP radiated toward one direction: sum_u A_u P_u G_u(d)."""
    total = 0.0
    for a in allocs:
        total += a.num_prbs * a.power_per_prb_w * codebook.gain_at(a.beam_id, d)
    return total


class SegmentLedger:
    """Per-segment consumption history: slot entries, period sums, window state.

    Period sums accumulate slot entries in recording order (documented
    accumulation order; the conservation test uses the same order).
    """

    def __init__(self, segment: Segment, period_slots: int, window_periods: int):
        if period_slots < 1 or window_periods < 1:
            raise ValueError("period_slots and window_periods must be >= 1")
        self.segment = segment
        self.period_slots = period_slots
        self.window_periods = window_periods
        self.slots: list[float] = []
        self.periods: list[float] = []
        self.rows: list[tuple[int, int, float, float]] = []  # (period, slot, consumption, budget)

    def record_slot(self, consumption_w: float, budget_w: float = float("nan")) -> None:
        if consumption_w < 0:
            raise ValueError("consumption must be >= 0")
        if len(self.slots) >= self.period_slots:
            raise LedgerError("period already has K slots; close_period() first")
        self.slots.append(consumption_w)
        self.rows.append((len(self.periods), len(self.slots) - 1, consumption_w, budget_w))

    def close_period(self) -> float:
        if len(self.slots) != self.period_slots:
            raise LedgerError(
                f"period has {len(self.slots)} slots recorded, expected {self.period_slots}")
        total = 0.0
        for c in self.slots:  # fixed order, matches the conservation property
            total += c
        self.periods.append(total)
        self.slots = []
        return total

    @property
    def current_period_consumed(self) -> float:
        total = 0.0
        for c in self.slots:
            total += c
        return total

    def actual_eirp(self, t: int | None = None) -> float:
        """Sliding-window average EIRP in watts per slot, missing periods = 0."""
        if not self.periods:
            raise LedgerError("no completed period yet")
        if t is None:
            t = len(self.periods) - 1
        lo = max(0, t - self.window_periods + 1)
        window = self.periods[lo:t + 1]
        return sum(window) / (self.window_periods * self.period_slots)

    def max_actual_eirp(self) -> float:
        """Largest sliding-window average over all completed periods."""
        return max(self.actual_eirp(t) for t in range(len(self.periods)))

    def is_compliant(self) -> bool:
        return self.max_actual_eirp() <= self.segment.threshold_w

    def write_csv(self, fh: io.TextIOBase) -> None:
        for period, slot, c, b in self.rows:
            fh.write(f"{period},{slot},{self.segment.segment_id},{c!r},{b!r}\n")


LEDGER_CSV_HEADER = "period,slot,segment_id,consumption_watts,budget_watts"


def export_ledgers_csv(ledgers: list[SegmentLedger], fh: io.TextIOBase) -> None:
    """Merged ledger export, ordered by segment id then time."""
    fh.write(LEDGER_CSV_HEADER + "\n")
    for led in sorted(ledgers, key=lambda l: l.segment.segment_id):
        led.write_csv(fh)
