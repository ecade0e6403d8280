"""Command-line front end: a thin client of the HTTP service.

Subcommands run against an in-process app by default; --server points the
same client at a remote instance. Exit code 0 means every run succeeded
and every compliance check passed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .bench import DEFAULT_USER_COUNTS, bench_allocator, format_bench
from .config import (
    emit_config,
    parse_config,
    preset_config,
    with_overrides,
)
from .service import create_app

log = logging.getLogger("emfmac.cli")


class ServiceClient:
    """httpx against a remote server, or the in-process ASGI app."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx

            self._c = httpx.Client(base_url=server, timeout=None)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient
            self._c = TestClient(create_app())

    def post(self, path: str, payload: dict):
        return self._c.post(path, json=payload)

    def get(self, path: str, params: dict | None = None):
        return self._c.get(path, params=params)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(","))


def _names(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="flat key-value config file")
    # no argparse default: a defaulted value would bypass the exclusivity check
    src.add_argument("--preset", choices=("desk", "table1"),
                     help="named scenario preset (default: desk)")
    p.add_argument("--out", metavar="DIR", required=True, help="output directory")
    p.add_argument("--seeds", metavar="N", type=int,
                   help="run seeds 1..N (overrides the config seed list)")
    p.add_argument("--strategy", metavar="LIST", type=_names,
                   help="comma-separated strategies, e.g. NoControl,RL,PL,PL-R")
    p.add_argument("--rho-db", metavar="LIST", type=_floats,
                   help="comma-separated EIRP reduction targets in dB (<= 0)")
    p.add_argument("--epsilon", metavar="LIST", type=_floats,
                   help="comma-separated budget-spread epsilon values in [0,1]")
    p.add_argument("--packet-mbits", metavar="LIST", type=_floats,
                   help="comma-separated packet sizes in Mbits")
    p.add_argument("--server", metavar="URL",
                   help="send requests to a running service instead of in-process")


def _resolve_config_text(args) -> str:
    cfg = parse_config(args.config) if args.config \
        else preset_config(args.preset or "desk")
    overrides = {}
    if args.seeds is not None:
        if args.seeds < 1:
            raise ValueError("--seeds: N must be >= 1")
        overrides["sweep.seeds"] = tuple(range(1, args.seeds + 1))
    if args.strategy is not None:
        overrides["sweep.strategies"] = args.strategy
    if args.rho_db is not None:
        overrides["sweep.rho_db"] = args.rho_db
    if args.epsilon is not None:
        overrides["sweep.epsilon"] = args.epsilon
    if args.packet_mbits is not None:
        overrides["sweep.packet_mbits"] = args.packet_mbits
    if overrides:
        cfg = with_overrides(cfg, overrides)
    return emit_config(cfg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emfmac",
                                description="EMF-aware MAC scheduling toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run the strategy/rho/epsilon/Q sweep")
    _add_config_flags(p_sweep)

    p_run = sub.add_parser("run", help="run a single sweep point")
    _add_config_flags(p_run)

    p_rep = sub.add_parser("report", help="summarize an existing sweep directory")
    p_rep.add_argument("--out", metavar="DIR", required=True)
    p_rep.add_argument("--server", metavar="URL")

    p_bench = sub.add_parser("bench", help="benchmark the power allocator")
    p_bench.add_argument("--users", metavar="LIST", type=_names,
                         default=tuple(str(n) for n in DEFAULT_USER_COUNTS))
    p_bench.add_argument("--iters", type=int, default=2000)
    p_bench.add_argument("--out", metavar="FILE", help="also write the table here")

    p_srv = sub.add_parser("serve", help="start the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)

    return p


_NUMERIC_LIST_FLAGS = ("--rho-db", "--epsilon", "--packet-mbits")


def _is_numeric_list(s: str) -> bool:
    try:
        for x in s.split(","):
            float(x)
    except ValueError:
        return False
    return True


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Parse argv, gluing negative numeric lists (`--rho-db -3,-6`) into the
    `--flag=value` form argparse requires for dash-leading values."""
    merged = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok in _NUMERIC_LIST_FLAGS and i + 1 < len(argv)
                and argv[i + 1].startswith("-") and _is_numeric_list(argv[i + 1])):
            merged.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        merged.append(tok)
        i += 1
    return build_parser().parse_args(merged)


def _cmd_sweep(args) -> int:
    client = ServiceClient(args.server)
    payload = {"config": {"config_text": _resolve_config_text(args)},
               "out_dir": args.out}
    resp = client.post("/sweeps", payload)
    if resp.status_code != 200:
        log.error("sweep rejected: %s", resp.json().get("detail", resp.text))
        return 2
    body = resp.json()
    rep = client.get("/report", params={"out_dir": args.out})
    if rep.status_code == 200:
        print(rep.text, end="")
    log.info("sweep %s: %d runs, %d failed, compliance_all=%s",
             "ok" if body["ok"] else "FAILED", body["n_runs"],
             body["n_failed"], body["compliance_all"])
    return 0 if body["ok"] else 1


def _cmd_run(args) -> int:
    client = ServiceClient(args.server)
    text = _resolve_config_text(args)
    payload: dict = {"config": {"config_text": text}, "out_dir": args.out}
    if args.packet_mbits:
        payload["q_mbits"] = args.packet_mbits[0]
    if args.strategy:
        payload["strategy"] = args.strategy[0]
    if args.rho_db:
        payload["rho_db"] = args.rho_db[0]
    if args.epsilon:
        payload["epsilon"] = args.epsilon[0]
    if args.seeds is not None:
        payload["seed"] = 1
    resp = client.post("/runs", payload)
    if resp.status_code != 200:
        log.error("run rejected: %s", resp.json().get("detail", resp.text))
        return 2
    body = resp.json()
    print(f"{body['key']}: cell={body['mean_cell_tput_bps'] / 1e6:.2f} Mbit/s "
          f"ue={body['mean_ue_tput_bps'] / 1e6:.2f} Mbit/s "
          f"max_ratio={body['max_window_ratio']:.4f} "
          f"compliant={body['compliance_ok']}")
    ok = body["compliance_ok"] or (payload.get("strategy") == "NoControl")
    return 0 if ok else 1


def _cmd_report(args) -> int:
    client = ServiceClient(args.server)
    resp = client.get("/report", params={"out_dir": args.out})
    if resp.status_code != 200:
        log.error("report failed: %s", resp.json().get("detail", resp.text))
        return 1
    print(resp.text, end="")
    return 0


def _cmd_bench(args) -> int:
    counts = tuple(int(x) for x in args.users)
    text = format_bench(bench_allocator(counts, n_iter=args.iters))
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("httpx").setLevel(logging.WARNING)
    args = parse_args(argv if argv is not None else sys.argv[1:])
    try:
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "serve":
            return _cmd_serve(args)
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
