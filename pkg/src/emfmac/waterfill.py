"""Alpha-fair water-filling power allocation under a linear EIRP budget.

maximize    sum_u fairness(A_u * r_u(P_u), alpha)
subject to  sum_u A_u * Ghat_u * P_u <= b,   p_min <= P_u <= p_max

with r_u(P) = w_u * log(1 + P/N_u). The KKT solution pins each user to a
bound or to the common marginal-utility water level nu; the level is found
by safeguarded bisection (Newton-accelerated) on nu inside a bracket that
provably contains the crossing. A numba kernel keeps the per-slot cost at
microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from scipy.optimize import brentq

MAX_LEVEL_ITERS = 200
SPEND_RTOL = 1e-9


class InfeasibleBudgetError(ValueError):
    """Budget below the spend of everyone at minimum power."""

    def __init__(self, budget: float, min_spend: float):
        super().__init__(
            f"budget {budget:.6g} W below minimum feasible spend {min_spend:.6g} W; "
            "drop users and retry")
        self.budget = budget
        self.min_spend = min_spend


@dataclass(frozen=True)
class RateCurve:
    """Concave rate model per PRB: rate(P) = bandwidth_scale * log(1 + P/noise)."""

    bandwidth_scale: float
    noise: float

    def __post_init__(self):
        if self.bandwidth_scale <= 0 or self.noise <= 0:
            raise ValueError("bandwidth_scale and noise must be > 0")

    def rate(self, p: float) -> float:
        return self.bandwidth_scale * math.log1p(p / self.noise)


@dataclass(frozen=True)
class PowerUser:
    """One user's allocation inputs: PRB count, worst-case beam gain toward
    its segment, rate curve, and per-PRB power bounds."""

    ue_id: int
    num_prbs: int
    max_gain: float
    rate: RateCurve
    p_min: float
    p_max: float

    def __post_init__(self):
        if self.num_prbs < 1:
            raise ValueError("num_prbs must be >= 1")
        if self.max_gain <= 0:
            raise ValueError("max_gain must be > 0")
        if not 0 < self.p_min <= self.p_max:
            raise ValueError("need 0 < p_min <= p_max")


def fairness(x: float, alpha: float) -> float:
    """x^(1-alpha)/(1-alpha), degenerating to log(x) at alpha = 1."""
    if x <= 0:
        raise ValueError("fairness argument must be > 0")
    if alpha == 1.0:
        return math.log(x)
    return x ** (1.0 - alpha) / (1.0 - alpha)


def marginal(u: PowerUser, p: float, alpha: float) -> float:
    """d/dP fairness(A*r(P)) normalized by the spend slope A*Ghat.

    Closed form A^(-alpha) * w^(1-alpha) * log(1+P/N)^(-alpha) / (Ghat*(N+P));
    strictly decreasing in P, which drives all the root finding here.
    """
    if p <= 0:
        raise ValueError("marginal defined for P > 0")
    w, n = u.rate.bandwidth_scale, u.rate.noise
    big_l = math.log1p(p / n)
    return (u.num_prbs ** -alpha) * (w ** (1.0 - alpha)) * (big_l ** -alpha) / (
        u.max_gain * (n + p))


def power_for_level(u: PowerUser, nu: float, alpha: float) -> float:
    """Power at which the user's marginal meets the level nu, clamped to bounds."""
    if nu <= 0:
        raise ValueError("nu must be > 0")
    if nu <= marginal(u, u.p_max, alpha):
        return u.p_max
    if nu >= marginal(u, u.p_min, alpha):
        return u.p_min
    return brentq(lambda p: marginal(u, p, alpha) - nu, u.p_min, u.p_max,
                  rtol=1e-12, maxiter=200)


@njit(cache=True)
def _alloc_kernel(A, G, w, N, pmin, pmax, b, alpha):  # pragma: no cover
    n = A.shape[0]
    P = np.empty(n)
    smin = 0.0
    smax = 0.0
    for u in range(n):
        smin += A[u] * G[u] * pmin[u]
        smax += A[u] * G[u] * pmax[u]
    if smin > b:
        return P, 0.0, smin, 1

    # per-user constants: log R1 with marginal(P) = exp(logR1) / (L^alpha * y),
    # y = N + P, L = log(y/N); envelope marginals at the power bounds
    log_r1 = np.empty(n)
    ymin = np.empty(n)
    ymax = np.empty(n)
    m_at_pmax = np.empty(n)
    m_at_pmin = np.empty(n)
    ywarm = np.empty(n)
    for u in range(n):
        ymin[u] = N[u] + pmin[u]
        ymax[u] = N[u] + pmax[u]
        lmin = np.log(ymin[u] / N[u])
        lmax = np.log(ymax[u] / N[u])
        lr = -alpha * np.log(A[u]) + (1.0 - alpha) * np.log(w[u]) - np.log(G[u])
        log_r1[u] = lr
        m_at_pmax[u] = np.exp(lr - alpha * np.log(lmax)) / ymax[u]
        m_at_pmin[u] = np.exp(lr - alpha * np.log(lmin)) / ymin[u]
        ywarm[u] = np.sqrt(ymin[u] * ymax[u])

    nu_sat_hi = m_at_pmin[0]
    nu_sat_lo = m_at_pmax[0]
    for u in range(1, n):
        if m_at_pmin[u] > nu_sat_hi:
            nu_sat_hi = m_at_pmin[u]
        if m_at_pmax[u] < nu_sat_lo:
            nu_sat_lo = m_at_pmax[u]

    if smax <= b:
        for u in range(n):
            P[u] = pmax[u]
        return P, nu_sat_lo, smax, 0
    if smin == b:
        for u in range(n):
            P[u] = pmin[u]
        return P, nu_sat_hi, smin, 0

    lo = 0.5 * nu_sat_lo   # spend(lo) = smax > b
    hi = 2.0 * nu_sat_hi   # spend(hi) = smin < b
    nu = np.sqrt(lo * hi)
    spend = 0.0
    for _ in range(MAX_LEVEL_ITERS):
        spend = 0.0
        dspend = 0.0
        for u in range(n):
            if nu <= m_at_pmax[u]:
                P[u] = pmax[u]
            elif nu >= m_at_pmin[u]:
                P[u] = pmin[u]
            else:
                log_r = log_r1[u] - np.log(nu)
                y = ywarm[u]
                ylo = ymin[u]
                yhi = ymax[u]
                for _ in range(60):
                    big_l = np.log(y / N[u])
                    h = alpha * np.log(big_l) + np.log(y) - log_r
                    if h > 0.0:
                        yhi = y
                    else:
                        ylo = y
                    if abs(h) < 1e-13:
                        break
                    ynew = y - h * y * big_l / (alpha + big_l)
                    if ynew <= ylo or ynew >= yhi:
                        ynew = 0.5 * (ylo + yhi)
                    if abs(ynew - y) <= 1e-16 * y:
                        y = ynew
                        break
                    y = ynew
                ywarm[u] = y
                P[u] = y - N[u]
                big_l = np.log(y / N[u])
                dspend += A[u] * G[u] * (-y * big_l / (nu * (alpha + big_l)))
            spend += A[u] * G[u] * P[u]
        if abs(spend - b) <= SPEND_RTOL * b:
            return P, nu, spend, 0
        if spend > b:
            lo = nu
        else:
            hi = nu
        if hi - lo <= 1e-15 * hi:
            break
        if dspend < 0.0:
            nu_newton = nu - (spend - b) / dspend
            if lo < nu_newton < hi:
                nu = nu_newton
            else:
                nu = 0.5 * (lo + hi)
        else:
            nu = 0.5 * (lo + hi)

    # bracket exhausted: re-evaluate on the feasible side (spend(hi) <= b)
    nu = hi
    spend = 0.0
    for u in range(n):
        if nu <= m_at_pmax[u]:
            P[u] = pmax[u]
        elif nu >= m_at_pmin[u]:
            P[u] = pmin[u]
        else:
            log_r = log_r1[u] - np.log(nu)
            y = ywarm[u]
            ylo = ymin[u]
            yhi = ymax[u]
            for _ in range(60):
                big_l = np.log(y / N[u])
                h = alpha * np.log(big_l) + np.log(y) - log_r
                if h > 0.0:
                    yhi = y
                else:
                    ylo = y
                if abs(h) < 1e-13:
                    break
                ynew = y - h * y * big_l / (alpha + big_l)
                if ynew <= ylo or ynew >= yhi:
                    ynew = 0.5 * (ylo + yhi)
                if abs(ynew - y) <= 1e-16 * y:
                    y = ynew
                    break
                y = ynew
            P[u] = y - N[u]
        spend += A[u] * G[u] * P[u]
    return P, nu, spend, 0


def allocate_arrays(A, G, w, N, pmin, pmax, budget_b: float, alpha: float):
    """Array fast path: returns (P, nu, spend). Raises on infeasible budget."""
    P, nu, spend, status = _alloc_kernel(A, G, w, N, pmin, pmax, budget_b, alpha)
    if status == 1:
        raise InfeasibleBudgetError(budget_b, spend)
    return P, nu, spend


def _user_arrays(users: list[PowerUser]):
    n = len(users)
    A = np.empty(n)
    G = np.empty(n)
    w = np.empty(n)
    N = np.empty(n)
    pmin = np.empty(n)
    pmax = np.empty(n)
    for i, u in enumerate(users):
        A[i] = u.num_prbs
        G[i] = u.max_gain
        w[i] = u.rate.bandwidth_scale
        N[i] = u.rate.noise
        pmin[i] = u.p_min
        pmax[i] = u.p_max
    return A, G, w, N, pmin, pmax


def water_level(users: list[PowerUser], budget_b: float, alpha: float) -> float:
    """Marginal-utility level nu* at which the budget is exactly spent (or the
    saturation level when the budget covers everyone at max power)."""
    if not users:
        raise ValueError("no users")
    _, nu, _ = allocate_arrays(*_user_arrays(users), budget_b, alpha)
    return float(nu)


def allocate(users: list[PowerUser], budget_b: float, alpha: float) -> dict[int, float]:
    """Water-filled per-PRB powers, keyed by ue_id."""
    if not users:
        raise ValueError("no users")
    P, _, _ = allocate_arrays(*_user_arrays(users), budget_b, alpha)
    return {u.ue_id: float(P[i]) for i, u in enumerate(users)}


def spend(users: list[PowerUser], powers: dict[int, float]) -> float:
    return sum(u.num_prbs * u.max_gain * powers[u.ue_id] for u in users)


def objective(users: list[PowerUser], powers: dict[int, float], alpha: float) -> float:
    """The allocation objective: sum of fairness of per-user total rates."""
    return sum(fairness(u.num_prbs * u.rate.rate(powers[u.ue_id]), alpha) for u in users)
