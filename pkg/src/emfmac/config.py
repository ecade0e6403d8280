"""Flat key-value config files: parsing, validation, emission, presets.

Format: one `section.key = value` per line, `#` comments, no nesting.
Lists are comma-separated. Unknown keys are hard errors. This module is
the dB boundary: configs carry rho in dB, core modules see linear watts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scheduler import STRATEGIES
from .sim import ChannelModel, EmfConfig, Scenario, SchedConfig, SimConfig


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_float_list(s: str) -> tuple:
    return tuple(float(x) for x in s.split(","))


def _parse_int_list(s: str) -> tuple:
    return tuple(int(x) for x in s.split(","))


def _parse_str_list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default); defaults mirror the desk-scale dataclasses
_SCN = Scenario()
_CHN = ChannelModel()
_EMF = EmfConfig()
_SCH = SchedConfig()

SCHEMA: dict[str, tuple] = {
    "scenario.num_sites": (int, _SCN.num_sites),
    "scenario.sectors_per_site": (int, _SCN.sectors_per_site),
    "scenario.inter_site_distance_m": (float, _SCN.inter_site_distance_m),
    "scenario.num_ues": (int, _SCN.num_ues),
    "scenario.packet_size_bits": (float, _SCN.packet_size_bits),
    "scenario.reading_time_ms": (float, _SCN.reading_time_ms),
    "scenario.sim_duration_slots": (int, _SCN.sim_duration_slots),
    "scenario.seed": (int, _SCN.seed),
    "scenario.min_ue_distance_m": (float, _SCN.min_ue_distance_m),
    "scenario.bs_height_m": (float, _SCN.bs_height_m),
    "scenario.ue_height_m": (float, _SCN.ue_height_m),
    "channel.pathloss_exponent": (float, _CHN.pathloss_exponent),
    "channel.pathloss_intercept_db": (float, _CHN.pathloss_intercept_db),
    "channel.shadowing_sigma_db": (float, _CHN.shadowing_sigma_db),
    "channel.noise_per_prb_w": (float, _CHN.noise_per_prb_w),
    "channel.rank": (float, _CHN.rank),
    "budget.epsilon": (float, _EMF.epsilon),
    "budget.rho_star": (float, _EMF.rho_star),
    "budget.guard_bstar_fraction": (float, _EMF.guard_fraction),
    "budget.period_slots": (int, _EMF.period_slots),
    "budget.window_periods": (int, _EMF.window_periods),
    "budget.budget_mode": (str, _EMF.budget_mode),
    "budget.floor_mode": (str, _EMF.floor_mode),
    "budget.rho_db": (float, -6.0),
    "segments.n_az": (int, _EMF.n_az_segments),
    "segments.n_el": (int, _EMF.n_el_segments),
    "segments.grid_resolution_deg": (float, _EMF.grid_resolution_deg),
    "scheduler.strategy": (str, _SCH.strategy),
    "scheduler.alpha": (float, _SCH.alpha),
    "scheduler.max_ues_per_slot": (int, _SCH.max_ues_per_slot),
    "scheduler.pf_time_constant": (float, _SCH.pf_time_constant_slots),
    "scheduler.tdd_dl_slots": (int, _SCH.tdd_dl_slots),
    "scheduler.tdd_ul_slots": (int, _SCH.tdd_ul_slots),
    "sweep.packet_mbits": (_parse_float_list, (0.25, 0.5, 2.0, 4.0)),
    "sweep.strategies": (_parse_str_list, ("NoControl", "RL", "PL", "PL-R")),
    "sweep.rho_db": (_parse_float_list, (-3.0, -6.0)),
    "sweep.epsilon": (_parse_float_list, (0.9,)),
    "sweep.seeds": (_parse_int_list, (1, 2, 3)),
}


@dataclass(frozen=True)
class ParsedConfig:
    """Typed config values keyed by flat `section.key` names.

    Equality is exact, so parse(emit(parse(x))) == parse(x) holds bit-for-bit.
    """

    values: tuple  # sorted ((key, value), ...) pairs

    def get(self, key: str):
        for k, v in self.values:
            if k == key:
                return v
        raise KeyError(key)

    def as_dict(self) -> dict:
        return dict(self.values)


def parse_config_text(text: str) -> ParsedConfig:
    """Parse flat key-value lines into a validated ParsedConfig."""
    out = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected `section.key = value`, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in SCHEMA:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            out[key] = parser(val)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: key {key!r}: {exc}") from exc
    cfg = ParsedConfig(values=tuple(sorted(out.items())))
    _validate(cfg)
    return cfg


def parse_config(path: str) -> ParsedConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def emit_config(cfg: ParsedConfig) -> str:
    lines = ["# emfmac configuration (flat key = value, lists comma-separated)"]
    section = None
    for key, value in cfg.values:
        sec = key.split(".", 1)[0]
        if sec != section:
            lines.append("")
            section = sec
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _validate(cfg: ParsedConfig) -> None:
    """Field checks with messages naming the key and constraint."""
    d = cfg.as_dict()
    if not 0.0 <= d["budget.epsilon"] <= 1.0:
        raise ValueError("budget.epsilon: epsilon in [0,1]")
    for e in d["sweep.epsilon"]:
        if not 0.0 <= e <= 1.0:
            raise ValueError("sweep.epsilon: epsilon in [0,1]")
    if d["budget.rho_db"] > 0.0:
        raise ValueError("budget.rho_db: rho_db in (-inf, 0] dB")
    for r in d["sweep.rho_db"]:
        if r > 0.0:
            raise ValueError("sweep.rho_db: rho_db in (-inf, 0] dB")
    for axis in ("sweep.packet_mbits", "sweep.strategies", "sweep.rho_db",
                 "sweep.epsilon", "sweep.seeds"):
        if len(d[axis]) == 0:
            raise ValueError(f"{axis}: sweep axes must be non-empty")
    for q in d["sweep.packet_mbits"]:
        if q <= 0:
            raise ValueError("sweep.packet_mbits: packet sizes must be > 0")
    for s in d["sweep.strategies"]:
        if s not in STRATEGIES:
            raise ValueError(f"sweep.strategies: {s!r} not in {STRATEGIES}")
    if d["scheduler.strategy"] not in STRATEGIES:
        raise ValueError(f"scheduler.strategy: {d['scheduler.strategy']!r} not in {STRATEGIES}")
    # remaining constraints are enforced by the dataclasses on build
    build_sim_config(cfg).validate()


def build_sim_config(cfg: ParsedConfig) -> SimConfig:
    """Materialize core-facing config; converts rho dB -> linear here."""
    d = cfg.as_dict()
    scenario = Scenario(
        num_sites=d["scenario.num_sites"],
        sectors_per_site=d["scenario.sectors_per_site"],
        inter_site_distance_m=d["scenario.inter_site_distance_m"],
        num_ues=d["scenario.num_ues"],
        packet_size_bits=d["scenario.packet_size_bits"],
        reading_time_ms=d["scenario.reading_time_ms"],
        sim_duration_slots=d["scenario.sim_duration_slots"],
        seed=d["scenario.seed"],
        min_ue_distance_m=d["scenario.min_ue_distance_m"],
        bs_height_m=d["scenario.bs_height_m"],
        ue_height_m=d["scenario.ue_height_m"],
    )
    channel = ChannelModel(
        pathloss_exponent=d["channel.pathloss_exponent"],
        pathloss_intercept_db=d["channel.pathloss_intercept_db"],
        shadowing_sigma_db=d["channel.shadowing_sigma_db"],
        noise_per_prb_w=d["channel.noise_per_prb_w"],
        rank=d["channel.rank"],
    )
    emf = EmfConfig(
        period_slots=d["budget.period_slots"],
        window_periods=d["budget.window_periods"],
        rho=10.0 ** (d["budget.rho_db"] / 10.0),
        epsilon=d["budget.epsilon"],
        rho_star=d["budget.rho_star"],
        guard_fraction=d["budget.guard_bstar_fraction"],
        budget_mode=d["budget.budget_mode"],
        floor_mode=d["budget.floor_mode"],
        n_az_segments=d["segments.n_az"],
        n_el_segments=d["segments.n_el"],
        grid_resolution_deg=d["segments.grid_resolution_deg"],
    )
    sched = SchedConfig(
        strategy=d["scheduler.strategy"],
        alpha=d["scheduler.alpha"],
        max_ues_per_slot=d["scheduler.max_ues_per_slot"],
        pf_time_constant_slots=d["scheduler.pf_time_constant"],
        tdd_dl_slots=d["scheduler.tdd_dl_slots"],
        tdd_ul_slots=d["scheduler.tdd_ul_slots"],
    )
    return SimConfig(scenario=scenario, channel=channel, emf=emf, sched=sched)


def sweep_axes(cfg: ParsedConfig) -> dict:
    d = cfg.as_dict()
    return {
        "packet_mbits": list(d["sweep.packet_mbits"]),
        "strategies": list(d["sweep.strategies"]),
        "rho_db": list(d["sweep.rho_db"]),
        "epsilons": list(d["sweep.epsilon"]),
        "seeds": list(d["sweep.seeds"]),
    }


PRESETS = ("desk", "table1")


def preset_config(name: str) -> ParsedConfig:
    """Named scenario presets: `desk` (default scale) and `table1` (full scale)."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    cfg = parse_config_text("")
    if name == "table1":
        d = dict(cfg.values)
        d["scenario.num_sites"] = 7
        d["scenario.num_ues"] = 210
        d["scenario.sim_duration_slots"] = 20000
        d["channel.rank"] = 4.0
        cfg = ParsedConfig(values=tuple(sorted(d.items())))
        _validate(cfg)
    return cfg


def with_overrides(cfg: ParsedConfig, overrides: dict) -> ParsedConfig:
    """Re-key selected values; overrides use the same flat key space."""
    d = dict(cfg.values)
    for key, value in overrides.items():
        if key not in SCHEMA:
            raise ValueError(f"unknown config key {key!r}")
        d[key] = value
    out = ParsedConfig(values=tuple(sorted(d.items())))
    _validate(out)
    return out
