"""HTTP service exposing allocation, budget, run, sweep, and report endpoints.

All domain validation errors surface as 400 with the core error message;
the CLI is a thin client of these endpoints.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..budget import BudgetConfig, PeriodBudget, refined_slot_budget, slot_budget
from ..config import ParsedConfig, parse_config_text, preset_config, with_overrides
from ..sweep import (
    RunSpec,
    report,
    run_key,
    run_sweep,
    write_single_run,
)
from ..waterfill import (
    InfeasibleBudgetError,
    PowerUser,
    RateCurve,
    allocate,
    objective,
    spend,
    water_level,
)
from .models import (
    AllocationRequest,
    AllocationResponse,
    ConfigSpec,
    RunRequest,
    RunResponse,
    SlotBudgetRequest,
    SlotBudgetResponse,
    SweepRequest,
    SweepResponse,
)

_SECTIONS = ("scenario", "channel", "budget", "segments", "scheduler", "sweep")


def resolve_config(spec: ConfigSpec) -> ParsedConfig:
    """Preset or literal text base, then explicitly-set section fields on top."""
    if spec.config_text is not None:
        cfg = parse_config_text(spec.config_text)
    else:
        cfg = preset_config(spec.preset)
    overrides = {}
    for section in _SECTIONS:
        model = getattr(spec, section)
        if model is None:
            continue
        for k, v in model.model_dump(exclude_unset=True).items():
            overrides[f"{section}.{k}"] = tuple(v) if isinstance(v, list) else v
    return with_overrides(cfg, overrides) if overrides else cfg


def create_app() -> FastAPI:
    app = FastAPI(title="emfmac", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/allocations", response_model=AllocationResponse)
    def post_allocations(req: AllocationRequest) -> AllocationResponse:
        try:
            users = [
                PowerUser(u.ue_id, u.num_prbs, u.max_gain,
                          RateCurve(u.bandwidth_scale, u.noise), u.p_min, u.p_max)
                for u in req.users
            ]
            powers = allocate(users, req.budget_b, req.alpha)
            nu = water_level(users, req.budget_b, req.alpha)
        except (InfeasibleBudgetError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return AllocationResponse(
            powers=powers,
            water_level=nu,
            spend=spend(users, powers),
            objective=objective(users, powers, req.alpha),
        )

    @app.post("/budgets/slot", response_model=SlotBudgetResponse)
    def post_slot_budget(req: SlotBudgetRequest) -> SlotBudgetResponse:
        cfg = BudgetConfig(
            period_slots=req.period_slots,
            epsilon=req.epsilon,
            rho_star=req.rho_star,
            guard_bstar=req.guard_bstar,
            refinement_enabled=req.refinement_enabled,
            floor_mode=req.floor_mode,
        )
        try:
            cfg.validate_against(req.gamma, req.cstar)
            pb = PeriodBudget(gamma=req.gamma, consumed=req.consumed,
                              slot_index=req.slot_index)
            b = slot_budget(pb, cfg, req.cstar)
            refined = (refined_slot_budget(b, req.cstar, cfg)
                       if req.refinement_enabled else None)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SlotBudgetResponse(budget_w=b, refined_w=refined)

    @app.post("/runs", response_model=RunResponse)
    def post_run(req: RunRequest) -> RunResponse:
        try:
            cfg = resolve_config(req.config)
            d = cfg.as_dict()
            q = req.q_mbits if req.q_mbits is not None \
                else d["scenario.packet_size_bits"] / 1e6
            strategy = req.strategy or d["scheduler.strategy"]
            rho_db = req.rho_db if req.rho_db is not None else d["budget.rho_db"]
            epsilon = req.epsilon if req.epsilon is not None else d["budget.epsilon"]
            seed = req.seed if req.seed is not None else d["scenario.seed"]
            m = write_single_run(req.out_dir, cfg, q, strategy, rho_db,
                                 epsilon, seed)
        except (ValueError, RuntimeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return RunResponse(
            key=run_key(q, strategy, rho_db, epsilon, seed),
            out_dir=req.out_dir,
            mean_cell_tput_bps=m.mean_cell_tput_bps,
            mean_ue_tput_bps=m.mean_ue_tput_bps,
            max_window_ratio=m.max_window_ratio,
            compliance_ok=m.compliance_ok,
            packets_completed=m.packets_completed,
            total_bits=m.total_bits,
            dl_slots=m.dl_slots,
        )

    @app.post("/sweeps", response_model=SweepResponse)
    def post_sweep(req: SweepRequest) -> SweepResponse:
        try:
            cfg = resolve_config(req.config)
            spec = RunSpec.from_config(cfg, req.out_dir)
            result = run_sweep(spec)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        n_points = len(spec.points())
        return SweepResponse(
            ok=result.ok,
            compliance_all=result.compliance_all,
            n_runs=n_points,
            n_failed=len(result.failures),
            failures=[{"key": k, "error": e} for k, e in result.failures],
            out_dir=req.out_dir,
        )

    @app.get("/report", response_class=PlainTextResponse)
    def get_report(out_dir: str) -> str:
        if not (Path(out_dir) / "cell_throughput.csv").exists():
            raise HTTPException(status_code=404,
                                detail=f"no sweep outputs in {out_dir!r}")
        return report(out_dir)

    return app
