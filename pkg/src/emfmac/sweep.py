"""Experiment harness: strategy/rho/epsilon/packet-size sweeps, CSV artifacts,
and the text report comparing strategies against the uncontrolled baseline.

Output tree under out_dir:
  cell_throughput.csv   one row per (Q, strategy, rho, epsilon, seed)
  metrics.csv           one row per (run, UE)
  compliance.txt        one line per run plus a final verdict line
  runs/<key>/eirp_trace.csv, runs/<key>/compliance.txt
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ParsedConfig, build_sim_config, sweep_axes, with_overrides
from .emf import export_ledgers_csv
from .sim import Metrics

log = logging.getLogger("emfmac.sweep")

CELL_CSV_HEADER = ("Q_bits,strategy,rho_db,cell_tput_bps,epsilon,seed,"
                   "ue_tput_bps,cell_tput_mean_bps,cell_tput_stderr_bps,"
                   "ue_tput_mean_bps,ue_tput_stderr_bps")
UE_CSV_HEADER = ("Q_bits,strategy,rho_db,epsilon,seed,ue_id,cell_id,"
                 "packet_tput_bps,delivered_bits")
COMPLIANT_LINE = "compliance: PASS all segments"


@dataclass
class RunSpec:
    """One sweep: a base config plus the axes to product over."""

    base: ParsedConfig
    packet_mbits: list
    strategies: list
    rho_db: list
    epsilons: list
    seeds: list
    out_dir: str

    @classmethod
    def from_config(cls, cfg: ParsedConfig, out_dir: str) -> "RunSpec":
        axes = sweep_axes(cfg)
        return cls(base=cfg, out_dir=out_dir, **axes)

    def validate(self) -> None:
        for name in ("packet_mbits", "strategies", "rho_db", "epsilons", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name}: sweep axes must be non-empty")
        for r in self.rho_db:
            if r > 0.0:
                raise ValueError("rho_db in (-inf, 0] dB")

    def points(self) -> list[tuple]:
        return list(itertools.product(self.packet_mbits, self.strategies,
                                      self.rho_db, self.epsilons, self.seeds))


def run_key(q_mbits: float, strategy: str, rho_db: float, epsilon: float,
            seed: int) -> str:
    return f"Q{q_mbits:g}_{strategy}_rho{rho_db:g}_eps{epsilon:g}_seed{seed}"


def run_point(base: ParsedConfig, q_mbits: float, strategy: str, rho_db: float,
              epsilon: float, seed: int) -> Metrics:
    """Materialize one sweep point and run it."""
    from .sim import run

    cfg = with_overrides(base, {
        "scenario.packet_size_bits": q_mbits * 1e6,
        "scenario.seed": seed,
        "scheduler.strategy": strategy,
        "budget.rho_db": rho_db,
        "budget.epsilon": epsilon,
    })
    return run(build_sim_config(cfg))


def compliance_line(key: str, strategy: str, m: Metrics) -> str:
    if strategy == "NoControl":
        return f"{key}: n/a (NoControl)"
    verdict = "PASS" if m.compliance_ok else "FAIL"
    return f"{key}: {verdict} max_ratio={m.max_window_ratio!r}"


def write_run_artifacts(run_dir: Path, key: str, strategy: str, m: Metrics) -> None:
    """Per-run EIRP trace and compliance verdict."""
    run_dir.mkdir(parents=True, exist_ok=True)
    flat = [led for row in m.ledgers for led in row]
    with open(run_dir / "eirp_trace.csv", "w", encoding="utf-8") as fh:
        export_ledgers_csv(flat, fh)
    lines = []
    for led in flat:
        gid = led.segment.segment_id
        if strategy == "NoControl":
            lines.append(f"segment {gid}: n/a (NoControl)")
        else:
            ratio = (led.max_actual_eirp() / led.segment.threshold_w
                     if led.periods else 0.0)
            verdict = "PASS" if ratio <= 1.0 else "FAIL"
            lines.append(f"segment {gid}: {verdict} ratio={ratio!r}")
    lines.append(compliance_line(key, strategy, m))
    (run_dir / "compliance.txt").write_text("\n".join(lines) + "\n",
                                            encoding="utf-8")


def _ue_rows(q_bits: float, strategy: str, rho_db: float, epsilon: float,
             seed: int, m: Metrics) -> list[list]:
    rows = []
    serving = m.topology.serving_cell
    for u in range(m.ue_bits.size):
        rows.append([repr(q_bits), strategy, repr(rho_db), repr(epsilon),
                     str(seed), str(u), str(int(serving[u])),
                     repr(float(m.ue_packet_tput_bps[u])),
                     repr(float(m.ue_bits[u]))])
    return rows


@dataclass
class SweepResult:
    out_dir: str
    rows: list = field(default_factory=list)       # cell_throughput.csv rows
    failures: list = field(default_factory=list)   # (key, message)
    compliance_all: bool = True
    metrics: dict = field(default_factory=dict)    # key -> Metrics, opt-in

    @property
    def ok(self) -> bool:
        return not self.failures and self.compliance_all


def _stderr(vals: list[float]) -> float:
    if len(vals) < 2:
        return 0.0
    return float(np.std(np.asarray(vals), ddof=1) / math.sqrt(len(vals)))


def run_sweep(spec: RunSpec, collect_metrics: bool = False) -> SweepResult:
    """Run the full product of sweep axes; failures are logged and skipped.

    collect_metrics keeps every run's Metrics in memory; leave it off for
    large sweeps (ledger rows dominate the footprint).
    """
    spec.validate()
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = spec.points()
    result = SweepResult(out_dir=spec.out_dir)
    comp_lines: list[str] = []
    ue_rows: list[list] = []
    # group results by (Q, strategy, rho, eps) for the seed aggregates
    per_run: dict[tuple, list] = {}

    t_sweep = time.perf_counter()
    for i, (q, strat, rho, eps, seed) in enumerate(points, start=1):
        key = run_key(q, strat, rho, eps, seed)
        t0 = time.perf_counter()
        try:
            m = run_point(spec.base, q, strat, rho, eps, seed)
        except Exception as exc:  # noqa: BLE001 - record and keep sweeping
            wall = time.perf_counter() - t0
            log.error("run %d/%d %s FAILED after %.2f s: %s",
                      i, len(points), key, wall, exc)
            result.failures.append((key, str(exc)))
            comp_lines.append(f"{key}: ERROR {exc}")
            continue
        wall = time.perf_counter() - t0
        log.info("run %d/%d %s cell=%.1f Mbit/s ue=%.2f Mbit/s ratio=%.4f (%.2f s)",
                 i, len(points), key, m.mean_cell_tput_bps / 1e6,
                 m.mean_ue_tput_bps / 1e6, m.max_window_ratio, wall)
        if strat != "NoControl" and not m.compliance_ok:
            result.compliance_all = False
        comp_lines.append(compliance_line(key, strat, m))
        write_run_artifacts(out / "runs" / key, key, strat, m)
        per_run.setdefault((q, strat, rho, eps), []).append(
            (seed, m.mean_cell_tput_bps, m.mean_ue_tput_bps))
        ue_rows.extend(_ue_rows(q * 1e6, strat, rho, eps, seed, m))
        if collect_metrics:
            result.metrics[key] = m

    for (q, strat, rho, eps), group in per_run.items():
        cells = [c for _, c, _ in group]
        ues = [u for _, _, u in group]
        c_mean, u_mean = float(np.mean(cells)), float(np.mean(ues))
        c_se, u_se = _stderr(cells), _stderr(ues)
        for seed, c, u in group:
            result.rows.append([repr(q * 1e6), strat, repr(rho), repr(c),
                                repr(eps), str(seed), repr(u), repr(c_mean),
                                repr(c_se), repr(u_mean), repr(u_se)])

    with open(out / "cell_throughput.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(CELL_CSV_HEADER + "\n")
        for row in result.rows:
            fh.write(",".join(row) + "\n")
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(UE_CSV_HEADER + "\n")
        for row in ue_rows:
            fh.write(",".join(row) + "\n")
    verdict = COMPLIANT_LINE if (result.compliance_all and not result.failures) \
        else "compliance: FAIL"
    comp_lines.append(verdict)
    (out / "compliance.txt").write_text("\n".join(comp_lines) + "\n",
                                        encoding="utf-8")
    log.info("sweep done: %d/%d runs ok, %s (%.1f s total)",
             len(points) - len(result.failures), len(points), verdict,
             time.perf_counter() - t_sweep)
    return result


def write_single_run(out_dir: str, base: ParsedConfig, q_mbits: float,
                     strategy: str, rho_db: float, epsilon: float,
                     seed: int) -> Metrics:
    """Run one point and emit the same artifact set a sweep would."""
    spec = RunSpec(base=base, packet_mbits=[q_mbits], strategies=[strategy],
                   rho_db=[rho_db], epsilons=[epsilon], seeds=[seed],
                   out_dir=out_dir)
    result = run_sweep(spec, collect_metrics=True)
    if result.failures:
        raise RuntimeError(f"run failed: {result.failures[0][1]}")
    return result.metrics[run_key(q_mbits, strategy, rho_db, epsilon, seed)]


def _read_cell_rows(out_dir: str) -> list[dict]:
    with open(Path(out_dir) / "cell_throughput.csv", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def report(out_dir: str) -> str:
    """Loss-vs-NoControl table per (Q, rho) plus the compliance verdicts."""
    rows = _read_cell_rows(out_dir)
    # one aggregate per (Q, strategy, rho, eps): mean columns repeat per seed
    agg: dict[tuple, dict] = {}
    for r in rows:
        k = (float(r["Q_bits"]), r["strategy"], float(r["rho_db"]),
             float(r["epsilon"]))
        agg[k] = {"cell": float(r["cell_tput_mean_bps"]),
                  "ue": float(r["ue_tput_mean_bps"])}
    strategies = sorted({k[1] for k in agg}, key=lambda s: s != "NoControl")
    combos = sorted({(k[0], k[2], k[3]) for k in agg})

    lines = ["EIRP control sweep report", "",
             "Mean cell throughput loss vs NoControl (per Q, rho, epsilon):"]
    header = (["Q_mbits", "rho_db", "epsilon", "NoControl_Mbps"]
              + [f"{s}_loss" for s in strategies if s != "NoControl"]
              + ["RL_minus_PLR_loss"])
    lines.append("  " + "  ".join(f"{h:>16s}" for h in header))
    for q, rho, eps in combos:
        nc = agg.get((q, "NoControl", rho, eps))
        cells = [f"{q / 1e6:16.3f}", f"{rho:16.1f}", f"{eps:16.2f}"]
        cells.append(f"{nc['cell'] / 1e6:16.2f}" if nc else f"{'n/a':>16s}")
        losses = {}
        for s in strategies:
            if s == "NoControl":
                continue
            a = agg.get((q, s, rho, eps))
            if nc and a and nc["cell"] > 0:
                losses[s] = 1.0 - a["cell"] / nc["cell"]
                cells.append(f"{losses[s]:16.4f}")
            else:
                cells.append(f"{'n/a':>16s}")
        if "RL" in losses and "PL-R" in losses:
            cells.append(f"{losses['RL'] - losses['PL-R']:16.4f}")
        else:
            cells.append(f"{'n/a':>16s}")
        lines.append("  " + "  ".join(cells))

    lines.append("")
    lines.append("Compliance:")
    comp = (Path(out_dir) / "compliance.txt").read_text(encoding="utf-8")
    lines.extend("  " + ln for ln in comp.strip().splitlines())
    return "\n".join(lines) + "\n"
