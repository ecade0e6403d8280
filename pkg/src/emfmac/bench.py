"""Latency benchmark for the slot-rate power allocator.

Times repeated allocate_arrays calls on pre-built random instances and
reports throughput plus latency percentiles per user count.
"""

from __future__ import annotations

import time

import numpy as np

from .waterfill import allocate_arrays

DEFAULT_USER_COUNTS = (2, 4, 8, 16)


def _random_instances(n_users: int, n_inst: int, rng: np.random.Generator):
    """Feasible random allocator inputs spanning wide gain/noise ranges."""
    inst = []
    for _ in range(n_inst):
        A = rng.integers(1, 51, size=n_users).astype(np.float64)
        G = 10.0 ** rng.uniform(0.0, 3.0, size=n_users)   # 30 dB spread
        w = np.full(n_users, 180e3 / np.log(2.0))
        N = 10.0 ** rng.uniform(-13.0, -11.0, size=n_users)
        pmax = np.full(n_users, 0.73)
        pmin = pmax * 1e-3
        lo = float(np.sum(A * G * pmin))
        hi = float(np.sum(A * G * pmax))
        b = lo + rng.uniform(0.1, 0.9) * (hi - lo)
        inst.append((A, G, w, N, pmin, pmax, b))
    return inst


def bench_allocator(user_counts=DEFAULT_USER_COUNTS, n_iter: int = 2000,
                    alpha: float = 1.0, seed: int = 0) -> list[dict]:
    """Per user count: allocations/s and latency percentiles in microseconds."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in user_counts:
        inst = _random_instances(n, min(n_iter, 256), rng)
        for args in inst[:8]:  # warm the compiled kernel and caches
            allocate_arrays(*args[:6], args[6], alpha)
        lat_us = np.empty(n_iter)
        for i in range(n_iter):
            A, G, w, N, pmin, pmax, b = inst[i % len(inst)]
            t0 = time.perf_counter_ns()
            allocate_arrays(A, G, w, N, pmin, pmax, b, alpha)
            lat_us[i] = (time.perf_counter_ns() - t0) / 1e3
        rows.append({
            "users": int(n),
            "iters": int(n_iter),
            "allocs_per_sec": float(1e6 / np.mean(lat_us)),
            "mean_us": float(np.mean(lat_us)),
            "p50_us": float(np.percentile(lat_us, 50)),
            "p90_us": float(np.percentile(lat_us, 90)),
            "p99_us": float(np.percentile(lat_us, 99)),
        })
    return rows


def format_bench(rows: list[dict]) -> str:
    lines = ["power allocator latency (per solve):",
             f"  {'users':>6s} {'allocs/s':>12s} {'mean_us':>9s} "
             f"{'p50_us':>9s} {'p90_us':>9s} {'p99_us':>9s}"]
    for r in rows:
        lines.append(f"  {r['users']:>6d} {r['allocs_per_sec']:>12.0f} "
                     f"{r['mean_us']:>9.1f} {r['p50_us']:>9.1f} "
                     f"{r['p90_us']:>9.1f} {r['p99_us']:>9.1f}")
    return "\n".join(lines) + "\n"
