"""Link adaptation: MCS staircase, SINR thresholds, per-PRB rates.

Spectral efficiencies follow the 256QAM CQI table; decode thresholds are
Shannon-inverse plus an implementation margin, which keeps every staircase
step at or below the continuous log2(1+SINR) envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PRB_BANDWIDTH_HZ = 360e3  # 12 subcarriers x 30 kHz
IMPLEMENTATION_MARGIN_DB = 1.5

# (index, spectral efficiency bits/s/Hz)
_SE_256QAM = (
    (1, 0.1523),   # QPSK
    (2, 0.3770),
    (3, 0.8770),
    (4, 1.4766),   # 16QAM
    (5, 1.9141),
    (6, 2.4063),
    (7, 2.7305),   # 64QAM
    (8, 3.3223),
    (9, 3.9023),
    (10, 4.5234),
    (11, 5.1152),
    (12, 5.5547),  # 256QAM
    (13, 6.2266),
    (14, 6.9141),
    (15, 7.4063),
)


@dataclass(frozen=True)
class McsEntry:
    index: int
    spectral_efficiency: float  # bits/s/Hz
    min_sinr_db: float

    def rate_per_prb_bps(self, rank: float = 1.0) -> float:
        return self.spectral_efficiency * PRB_BANDWIDTH_HZ * rank


class McsTable:
    """Ordered MCS list, strictly increasing in efficiency and threshold."""

    def __init__(self, entries: list[McsEntry]):
        if not entries:
            raise ValueError("empty MCS table")
        for a, b in zip(entries, entries[1:]):
            if not (b.spectral_efficiency > a.spectral_efficiency
                    and b.min_sinr_db > a.min_sinr_db):
                raise ValueError("MCS table must increase in efficiency and threshold")
        self.entries = list(entries)
        self._by_index = {e.index: e for e in entries}

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, index: int) -> McsEntry:
        return self._by_index[index]

    def lowest(self) -> McsEntry:
        return self.entries[0]

    def select(self, sinr_db: float) -> McsEntry | None:
        """Highest entry decodable at the given SINR; None below the table."""
        chosen = None
        for e in self.entries:
            if e.min_sinr_db <= sinr_db:
                chosen = e
            else:
                break
        return chosen

    def next_lower(self, index: int) -> McsEntry | None:
        pos = self.entries.index(self._by_index[index])
        return self.entries[pos - 1] if pos > 0 else None

    def delta_db(self, from_index: int, to_index: int) -> float:
        """SINR headroom freed by stepping down from one entry to another."""
        d = self._by_index[from_index].min_sinr_db - self._by_index[to_index].min_sinr_db
        if d < 0:
            raise ValueError("downgrade must move to a lower entry")
        return d


def shannon_threshold_db(se: float, margin_db: float = IMPLEMENTATION_MARGIN_DB) -> float:
    return 10.0 * math.log10(2.0 ** se - 1.0) + margin_db


def default_table() -> McsTable:
    return McsTable([
        McsEntry(i, se, shannon_threshold_db(se)) for i, se in _SE_256QAM
    ])
