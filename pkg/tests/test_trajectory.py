"""Jerk-limited planner tests.

Duration optimality is checked against a brute-force oracle that grid-searches
the three switch times of a symmetric rest-to-rest S-curve and integrates the
profile forward; limits are checked by dense sampling.
"""

import time

import numpy as np
import pytest

from signmotion.trajectory import (
    JerkProfile,
    KinematicLimits,
    PlanningError,
    check_initial_state,
    clamp_safety,
    densify,
    plan_axis,
    plan_joint_move,
    sample,
    synchronize,
)

LIM = KinematicLimits(v_max=4.0, a_max=20.0, j_max=200.0)


def oracle_min_duration(d, limits, grid=240):
    """Brute-force minimum duration for a rest-to-rest move of distance d.

    A time-optimal rest-to-rest S-curve is parameterized by jerk time t_j,
    constant-acceleration time t_a, and cruise time t_v; displacement is
    integrated forward under full jerk.  Returns the smallest feasible total
    duration on the grid (upper bound on the true optimum within grid step).
    """
    d = abs(d)
    jm, am, vm = limits.j_max, limits.a_max, limits.v_max
    tj_max = min(am / jm, (vm / jm) ** 0.5, (d / (2 * jm)) ** (1.0 / 3.0))
    best = np.inf
    for tj in np.linspace(1e-6, tj_max, grid):
        a_pk = jm * tj
        # velocity gained by one full ramp (two jerk phases + t_a hold)
        ta_max = max((vm - jm * tj * tj) / a_pk, 0.0)
        for ta in np.linspace(0.0, ta_max, grid // 3 + 1):
            v_pk = a_pk * (tj + ta)
            if v_pk > vm + 1e-12:
                continue
            d_ramp = v_pk * (2 * tj + ta)  # both ramps, average v = v_pk/2
            if d_ramp > d + 1e-12:
                continue
            tv = (d - d_ramp) / v_pk
            best = min(best, 4 * tj + 2 * ta + tv)
    return best


def dense_limit_check(profile, limits, rate=10000.0):
    """Max violation of v/a/j limits sampling at `rate`."""
    T = profile.duration
    n = max(2, int(np.ceil(T * rate)) + 1)
    ts = np.linspace(0.0, T, n)
    worst = 0.0
    for t in ts:
        _, v, a = sample(profile, t)
        worst = max(worst, abs(v) - limits.v_max, abs(a) - limits.a_max)
    for dt, j in profile.segments:
        worst = max(worst, abs(j) - limits.j_max)
    return worst


def forward_integrate(profile, steps_per_seg=2000):
    """Independent forward-Euler integration of the jerk schedule."""
    p, v, a = profile.p0, profile.v0, profile.a0
    for dur, j in profile.segments:
        dt = dur / steps_per_seg
        for _ in range(steps_per_seg):
            p += v * dt + 0.5 * a * dt * dt
            v += a * dt + 0.5 * j * dt * dt
            a += j * dt
    return p, v, a


def test_rest_to_rest_boundaries_and_limits():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p0, tgt = rng.uniform(-2.0, 2.0, 2)
        prof = plan_axis(p0, 0.0, 0.0, tgt, LIM)
        _, p, v, a = prof.boundaries()[-1]
        assert abs(p - tgt) < 1e-6
        assert abs(v) < 1e-6 and abs(a) < 1e-6
        assert dense_limit_check(prof, LIM) < 1e-9


def test_duration_within_one_percent_of_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        d = rng.uniform(0.01, 3.0)
        prof = plan_axis(0.0, 0.0, 0.0, d, LIM)
        oracle = oracle_min_duration(d, LIM)
        assert prof.duration <= 1.01 * oracle
        # and the oracle never beats a feasible plan by more than its grid slop
        assert prof.duration >= oracle - 0.05 * oracle


def test_plan_matches_forward_integration():
    rng = np.random.default_rng(2)
    for _ in range(30):
        p0, tgt = rng.uniform(-1.0, 1.0, 2)
        v0 = rng.uniform(-2.0, 2.0)
        a0 = rng.uniform(-10.0, 10.0)
        if not check_initial_state(v0, a0, LIM):
            continue
        prof = plan_axis(p0, v0, a0, tgt, LIM)
        p, v, a = forward_integrate(prof)
        assert abs(p - tgt) < 1e-3  # Euler integration error dominates
        assert abs(v) < 1e-2 and abs(a) < 1e-2
        _, pb, vb, ab = prof.boundaries()[-1]
        assert abs(pb - tgt) < 1e-6 and abs(vb) < 1e-6 and abs(ab) < 1e-6


def test_nonzero_initial_state_limits():
    rng = np.random.default_rng(3)
    count = 0
    while count < 50:
        v0 = rng.uniform(-3.0, 3.0)
        a0 = rng.uniform(-15.0, 15.0)
        if not check_initial_state(v0, a0, LIM):
            continue
        prof = plan_axis(rng.uniform(-1, 1), v0, a0, rng.uniform(-1, 1), LIM)
        assert dense_limit_check(prof, LIM) < 1e-9
        count += 1


def test_infeasible_initial_state_raises():
    with pytest.raises(PlanningError):
        plan_axis(0.0, LIM.v_max * 1.5, 0.0, 1.0, LIM)
    # velocity transient: v0 near v_max with large same-sign acceleration
    with pytest.raises(PlanningError):
        plan_axis(0.0, LIM.v_max * 0.999, LIM.a_max, 1.0, LIM)


def test_zero_move_is_empty():
    prof = plan_axis(0.5, 0.0, 0.0, 0.5, LIM)
    assert prof.segments == ()
    assert prof.duration == 0.0


def test_determinism():
    a = plan_axis(0.1, 0.0, 0.0, 1.3, LIM)
    b = plan_axis(0.1, 0.0, 0.0, 1.3, LIM)
    assert a.segments == b.segments


def test_runtime_under_one_ms_per_axis():
    rng = np.random.default_rng(4)
    cases = [(rng.uniform(-2, 2), rng.uniform(-2, 2)) for _ in range(100)]
    t0 = time.perf_counter()
    for p0, tgt in cases:
        plan_axis(p0, 0.0, 0.0, tgt, LIM)
    elapsed = time.perf_counter() - t0
    assert elapsed / len(cases) < 1e-3


def test_synchronize_common_duration():
    rng = np.random.default_rng(5)
    profs = [plan_axis(0.0, 0.0, 0.0, rng.uniform(-2, 2), LIM)
             for _ in range(8)]
    T = max(p.duration for p in profs)
    out = synchronize(profs)
    for p in out:
        assert abs(p.duration - T) < 1e-6
        _, pos, v, a = p.boundaries()[-1]
        assert abs(pos - p.target) < 1e-6
        assert abs(v) < 1e-6 and abs(a) < 1e-6
        assert dense_limit_check(p, p.limits) < 1e-9


def test_synchronize_zero_displacement_holds():
    profs = [plan_axis(0.0, 0.0, 0.0, 1.0, LIM),
             plan_axis(0.3, 0.0, 0.0, 0.3, LIM)]
    out = synchronize(profs)
    T = out[0].duration
    for t in np.linspace(0, T, 50):
        p, v, a = sample(out[1], t)
        assert p == 0.3 and v == 0.0 and a == 0.0


def test_synchronize_empty_raises():
    with pytest.raises(PlanningError):
        synchronize([])


def test_clamp_safety_margin():
    lo = np.array([-1.0, -1.0])
    hi = np.array([1.0, 1.0])
    q, n = clamp_safety(np.array([0.99, 0.0]), lo, hi, margin=0.02)
    assert n == 1
    assert np.isclose(q[0], 1.0 - 0.02 * 2.0)
    assert q[1] == 0.0
    q, n = clamp_safety(np.array([0.5, -0.5]), lo, hi, margin=0.0)
    assert n == 0 and np.allclose(q, [0.5, -0.5])
    with pytest.raises(ValueError):
        clamp_safety(np.zeros(2), lo, hi, margin=0.6)


def test_plan_joint_move_synchronized():
    q0 = np.zeros(4)
    q1 = np.array([1.0, -0.5, 0.1, 0.0])
    profs = plan_joint_move(q0, q1, LIM)
    T = profs[0].duration
    for p, tgt in zip(profs, q1):
        assert abs(p.duration - T) < 1e-6
        assert abs(p.boundaries()[-1][1] - tgt) < 1e-6


def test_densify_grid_and_continuity():
    wps = np.array([[0.0, 0.0], [0.5, -0.3], [0.2, 0.1]])
    times, rows = densify(wps, 30.0, LIM, rate=500.0)
    assert rows.shape[1] == 2
    assert np.all(np.diff(times) > 0)
    assert np.allclose(rows[0], wps[0])
    assert np.allclose(rows[-1], wps[-1], atol=1e-6)
    # commands never move faster than v_max between samples
    dq = np.abs(np.diff(rows, axis=0)) / np.diff(times)[:, None]
    assert np.max(dq) <= LIM.v_max + 1e-6


def test_densify_rejects_bad_input():
    with pytest.raises(PlanningError):
        densify(np.zeros(3), 30.0, LIM)


def test_limit_validation():
    with pytest.raises(ValueError):
        KinematicLimits(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        KinematicLimits(1.0, -1.0, 1.0)


def test_sample_outside_domain_raises():
    prof = plan_axis(0.0, 0.0, 0.0, 1.0, LIM)
    with pytest.raises(PlanningError):
        sample(prof, prof.duration + 1.0)


def test_pure_jerk_quad_profile():
    """Huge a/v limits: the move collapses to a 2-phase jerk profile whose
    duration matches the closed form 2 * (2 d / j)^(1/3)... integrated."""
    lim = KinematicLimits(v_max=1e9, a_max=1e9, j_max=1.0)
    d = 1.0
    prof = plan_axis(0.0, 0.0, 0.0, d, lim)
    # analytic optimum: four jerk segments of t_j = (d / (2 j))^(1/3)
    tj = (d / 2.0) ** (1.0 / 3.0)
    assert abs(prof.duration - 4.0 * tj) < 1e-6
    _, p, v, a = prof.boundaries()[-1]
    assert abs(p - d) < 1e-9 and abs(v) < 1e-9 and abs(a) < 1e-9
