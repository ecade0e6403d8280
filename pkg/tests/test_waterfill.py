import math

import numpy as np
import pytest

from emfmac.waterfill import (
    InfeasibleBudgetError,
    PowerUser,
    RateCurve,
    allocate,
    allocate_arrays,
    fairness,
    marginal,
    objective,
    power_for_level,
    spend,
    water_level,
)
from wf_oracle import oracle_allocate, oracle_objective


def user(ue_id=0, A=10, G=5.0, w=1.0, N=0.02, p_min=1e-4, p_max=0.73):
    return PowerUser(ue_id, A, G, RateCurve(w, N), p_min, p_max)


def random_users(rng, n):
    out = []
    for u in range(n):
        out.append(PowerUser(
            ue_id=u,
            num_prbs=int(rng.integers(1, 51)),
            max_gain=float(10 ** rng.uniform(-1.5, 1.5)),  # 30 dB span
            rate=RateCurve(float(rng.uniform(0.5, 2.0)),
                           float(10 ** rng.uniform(-3, -1))),  # 20 dB span
            p_min=1e-4,
            p_max=0.73,
        ))
    return out


def arrays_of(users):
    return (np.array([float(u.num_prbs) for u in users]),
            np.array([u.max_gain for u in users]),
            np.array([u.rate.bandwidth_scale for u in users]),
            np.array([u.rate.noise for u in users]),
            np.array([u.p_min for u in users]),
            np.array([u.p_max for u in users]))


def test_fairness_values():
    assert fairness(3.7, 0.0) == pytest.approx(3.7)
    assert fairness(1.0, 1.0) == 0.0
    assert fairness(2.0, 2.0) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        fairness(0.0, 1.0)
    with pytest.raises(ValueError):
        fairness(-1.0, 0.5)


def test_marginal_alpha1_closed_form():
    u = user(A=7, G=3.0, w=1.3, N=0.05)
    p = 0.2
    want = 1.0 / (7 * 3.0 * (0.05 + 0.2) * math.log(1 + 0.2 / 0.05))
    # w drops out at alpha=1 only through the rate log; recompute with w:
    # d/dP log(A*w*log1p(P/N)) / (A*G) = (w/(N+P)) / (w*log1p(P/N)) / (A*G)
    assert marginal(u, p, 1.0) == pytest.approx(want, rel=1e-12)


def test_marginal_matches_finite_differences():
    rng = np.random.default_rng(23)
    for _ in range(100):
        u = random_users(rng, 1)[0]
        alpha = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        p = float(rng.uniform(0.01, 0.7))
        eps = 1e-6 * p
        f = lambda q: fairness(u.num_prbs * u.rate.rate(q), alpha)
        fd = (f(p + eps) - f(p - eps)) / (2 * eps) / (u.num_prbs * u.max_gain)
        assert marginal(u, p, alpha) == pytest.approx(fd, rel=1e-6)


def test_marginal_strictly_decreasing_and_gain_scaling():
    u = user()
    assert marginal(u, u.p_max, 1.0) < marginal(u, u.p_min, 1.0)
    u2 = PowerUser(1, u.num_prbs, 2 * u.max_gain, u.rate, u.p_min, u.p_max)
    assert marginal(u2, 0.3, 1.0) == pytest.approx(marginal(u, 0.3, 1.0) / 2, rel=1e-12)


def test_power_for_level_branches():
    u = user()
    assert power_for_level(u, 1e-12, 1.0) == u.p_max
    assert power_for_level(u, 1e12, 1.0) == u.p_min
    nu = math.sqrt(marginal(u, u.p_min, 1.0) * marginal(u, u.p_max, 1.0))
    p = power_for_level(u, nu, 1.0)
    assert u.p_min < p < u.p_max
    assert marginal(u, p, 1.0) == pytest.approx(nu, rel=1e-8)


def test_kernel_matches_power_for_level():
    # the numba path and the scipy reference path agree on the same level
    rng = np.random.default_rng(31)
    for _ in range(20):
        users = random_users(rng, int(rng.integers(2, 6)))
        smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
        smax = sum(u.num_prbs * u.max_gain * u.p_max for u in users)
        b = float(rng.uniform(smin, smax))
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        powers = allocate(users, b, alpha)
        nu = water_level(users, b, alpha)
        for u in users:
            assert powers[u.ue_id] == pytest.approx(power_for_level(u, nu, alpha),
                                                    rel=1e-6, abs=1e-12)


def test_budget_slack_gives_pmax():
    users = [user(0), user(1, A=20, G=1.0)]
    smax = sum(u.num_prbs * u.max_gain * u.p_max for u in users)
    powers = allocate(users, smax * 1.5, 1.0)
    for u in users:
        assert powers[u.ue_id] == u.p_max


def test_two_identical_users_split_evenly():
    u0, u1 = user(0), user(1)
    smin = 2 * u0.num_prbs * u0.max_gain * u0.p_min
    smax = 2 * u0.num_prbs * u0.max_gain * u0.p_max
    b = 0.4 * smin + 0.6 * smax
    powers = allocate([u0, u1], b, 1.0)
    assert powers[0] == pytest.approx(powers[1], rel=1e-9)
    assert powers[0] == pytest.approx(b / (2 * u0.num_prbs * u0.max_gain), rel=1e-8)


def test_boundary_budget_all_pmin():
    users = [user(0), user(1, A=3, G=0.4, N=0.05)]
    smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
    powers = allocate(users, smin, 1.0)
    for u in users:
        assert powers[u.ue_id] == u.p_min


def test_infeasible_budget_raises():
    users = [user(0), user(1)]
    smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
    with pytest.raises(InfeasibleBudgetError) as ei:
        allocate(users, smin * 0.5, 1.0)
    assert ei.value.min_spend == pytest.approx(smin)
    with pytest.raises(ValueError):
        allocate([], 1.0, 1.0)
    with pytest.raises(ValueError):
        water_level([], 1.0, 1.0)


def test_single_user_spends_whole_budget():
    u = user(0, A=25, G=2.0)
    b = 0.5 * 25 * 2.0 * u.p_max
    powers = allocate([u], b, 1.0)
    assert powers[0] == pytest.approx(b / (25 * 2.0), rel=1e-8)


def test_higher_noise_user_gets_weakly_more_power():
    rng = np.random.default_rng(37)
    for _ in range(20):
        base = random_users(rng, 1)[0]
        noisy = PowerUser(1, base.num_prbs, base.max_gain,
                          RateCurve(base.rate.bandwidth_scale, base.rate.noise * 5),
                          base.p_min, base.p_max)
        u0 = PowerUser(0, base.num_prbs, base.max_gain, base.rate, base.p_min, base.p_max)
        smin = sum(u.num_prbs * u.max_gain * u.p_min for u in (u0, noisy))
        smax = sum(u.num_prbs * u.max_gain * u.p_max for u in (u0, noisy))
        b = float(rng.uniform(smin * 1.01, smax * 0.99))
        powers = allocate([u0, noisy], b, 1.0)
        assert powers[1] >= powers[0] - 1e-9


def test_spend_within_budget_randomized():
    rng = np.random.default_rng(41)
    for _ in range(200):
        users = random_users(rng, int(rng.integers(1, 9)))
        smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
        smax = sum(u.num_prbs * u.max_gain * u.p_max for u in users)
        b = float(rng.uniform(smin, smax * 1.1))
        alpha = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        powers = allocate(users, b, alpha)
        s = spend(users, powers)
        assert s <= b * (1 + 1e-9)
        for u in users:
            assert u.p_min - 1e-15 <= powers[u.ue_id] <= u.p_max + 1e-15


def test_complementary_slackness():
    rng = np.random.default_rng(43)
    for _ in range(50):
        users = random_users(rng, 4)
        smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
        smax = sum(u.num_prbs * u.max_gain * u.p_max for u in users)
        b = float(rng.uniform(smin * 1.05, smax * 0.95))
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        powers = allocate(users, b, alpha)
        interior = [u for u in users
                    if u.p_min * (1 + 1e-7) < powers[u.ue_id] < u.p_max * (1 - 1e-7)]
        if interior:
            assert spend(users, powers) == pytest.approx(b, rel=1e-6)
            nu = water_level(users, b, alpha)
            for u in interior:
                assert marginal(u, powers[u.ue_id], alpha) == pytest.approx(nu, rel=1e-5)


def test_monotone_in_budget():
    rng = np.random.default_rng(47)
    for _ in range(30):
        users = random_users(rng, 4)
        smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
        smax = sum(u.num_prbs * u.max_gain * u.p_max for u in users)
        b1 = float(rng.uniform(smin, smax))
        b2 = float(rng.uniform(b1, smax * 1.05))
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        p1 = allocate(users, b1, alpha)
        p2 = allocate(users, b2, alpha)
        for u in users:
            assert p2[u.ue_id] >= p1[u.ue_id] - 1e-7 * p1[u.ue_id] - 1e-12


def test_scale_invariance_in_gain_and_budget():
    rng = np.random.default_rng(53)
    users = random_users(rng, 4)
    smin = sum(u.num_prbs * u.max_gain * u.p_min for u in users)
    smax = sum(u.num_prbs * u.max_gain * u.p_max for u in users)
    b = 0.5 * (smin + smax)
    kappa = 7.3
    scaled = [PowerUser(u.ue_id, u.num_prbs, u.max_gain * kappa, u.rate, u.p_min, u.p_max)
              for u in users]
    p1 = allocate(users, b, 1.0)
    p2 = allocate(scaled, b * kappa, 1.0)
    for u in users:
        assert p2[u.ue_id] == pytest.approx(p1[u.ue_id], rel=1e-6)


def test_matches_oracle_small_batch():
    # light version of the oracle sweep; the full 500-instance run lives in
    # the acceptance suite
    rng = np.random.default_rng(59)
    for _ in range(40):
        users = random_users(rng, int(rng.integers(2, 6)))
        A, G, w, N, pmin, pmax = arrays_of(users)
        smin = float(np.sum(A * G * pmin))
        smax = float(np.sum(A * G * pmax))
        b = float(rng.uniform(smin * 1.001, smax))
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        powers = allocate(users, b, alpha)
        got = objective(users, powers, alpha)
        P_star = oracle_allocate(A, G, w, N, pmin, pmax, b, alpha)
        want = oracle_objective(A, w, N, P_star, alpha)
        assert got >= want - 1e-6 * abs(want)


def test_allocate_arrays_fast_path_agrees():
    rng = np.random.default_rng(61)
    users = random_users(rng, 6)
    A, G, w, N, pmin, pmax = arrays_of(users)
    b = float(np.sum(A * G * pmax)) * 0.3
    P, nu, s = allocate_arrays(A, G, w, N, pmin, pmax, b, 1.0)
    powers = allocate(users, b, 1.0)
    for i, u in enumerate(users):
        assert powers[u.ue_id] == pytest.approx(float(P[i]), rel=1e-12)
    assert s == pytest.approx(spend(users, powers), rel=1e-12)
