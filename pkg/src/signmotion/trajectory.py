"""Jerk-limited online trajectory generation for deployment.

Per-axis seven-segment S-curve profiles to an at-rest target: ramp the
(velocity, acceleration) state to a peak velocity, optionally cruise, then
ramp to rest at the goal.  The peak velocity solves the displacement
constraint by bisection (displacement is monotone in the peak).  Multi-axis
synchronization stretches faster axes to the slowest axis' duration by
bisecting a common scale on their kinematic limits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float
    a_max: float
    j_max: float

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.j_max) <= 0:
            raise ValueError("kinematic limits must be strictly positive")

    def scaled(self, f):
        return KinematicLimits(self.v_max * f, self.a_max * f, self.j_max * f)


@dataclass(frozen=True)
class JerkProfile:
    """Piecewise-constant-jerk profile: segments of (duration, jerk)."""

    p0: float
    v0: float
    a0: float
    target: float
    segments: tuple  # of (duration s, jerk rad/s^3)
    limits: KinematicLimits

    @property
    def duration(self):
        return sum(t for t, _ in self.segments)

    def boundaries(self):
        """State (t, p, v, a) at the start of each segment and at the end."""
        t, p, v, a = 0.0, self.p0, self.v0, self.a0
        out = [(t, p, v, a)]
        for dt, j in self.segments:
            p += v * dt + 0.5 * a * dt * dt + j * dt**3 / 6.0
            v += a * dt + 0.5 * j * dt * dt
            a += j * dt
            t += dt
            out.append((t, p, v, a))
        return out


def sample(profile, t):
    """Closed-form (p, v, a) at time t in [0, duration]."""
    if t < -1e-9 or t > profile.duration + 1e-9:
        raise PlanningError(f"t={t} outside [0, {profile.duration}]")
    t = min(max(t, 0.0), profile.duration)
    p, v, a = profile.p0, profile.v0, profile.a0
    rem = t
    for dt, j in profile.segments:
        step = min(rem, dt)
        if step > 0:
            p += v * step + 0.5 * a * step * step + j * step**3 / 6.0
            v += a * step + 0.5 * j * step * step
            a += j * step
            rem -= step
        if rem <= 0:
            break
    return p, v, a


def _peak_accel(a1, dv, limits):
    """Closed-form peak acceleration for a (v, a) ramp gaining dv.

    The velocity gained by jerking a1 -> a_pk -> 0 is monotone in a_pk, flat
    at a1*|a1|/(2 j_max) for a_pk between a1 and 0 (single continuous ramp).
    """
    jm, am = limits.j_max, limits.a_max
    dv_flat = a1 * abs(a1) / (2.0 * jm)
    if dv > dv_flat:
        a_pk = np.sqrt(jm * dv + 0.5 * a1 * a1)
    elif dv < dv_flat:
        a_pk = -np.sqrt(0.5 * a1 * a1 - jm * dv)
    else:
        a_pk = 0.0
    return min(max(a_pk, -am), am)


def _accel_ramp(v1, a1, v2, limits):
    """Time-optimal segments from (v1, a1) to (v2, 0) under a/j limits.

    Returns (segments, displacement).  The acceleration profile is a ramp to a
    closed-form peak a_pk, an optional constant-acceleration phase, and a ramp
    to zero.
    """
    jm = limits.j_max
    dv = v2 - v1

    def dv_of_peak(a_pk):
        # jerk phases only: a1 -> a_pk -> 0
        d1 = (a_pk * a_pk - a1 * a1) / (2.0 * jm)
        if a_pk < a1:
            d1 = -d1
        d3 = a_pk * abs(a_pk) / (2.0 * jm)
        return d1 + d3

    a_pk = _peak_accel(a1, dv, limits)

    segs = []
    j1 = jm if a_pk >= a1 else -jm
    t1 = abs(a_pk - a1) / jm
    if t1 > 0:
        segs.append((t1, j1))
    dv_ramps = dv_of_peak(a_pk)
    if abs(a_pk) > 1e-15:
        t2 = (dv - dv_ramps) / a_pk
        t2 = max(t2, 0.0)
    else:
        t2 = 0.0
    if t2 > 0:
        segs.append((t2, 0.0))
    t3 = abs(a_pk) / jm
    if t3 > 0:
        segs.append((t3, -jm if a_pk > 0 else jm))

    # closed-form displacement of the ramp
    p, v, a = 0.0, v1, a1
    for dt, j in segs:
        p += v * dt + 0.5 * a * dt * dt + j * dt**3 / 6.0
        v += a * dt + 0.5 * j * dt * dt
        a += j * dt
    return segs, p


def check_initial_state(v0, a0, limits):
    """An initial state is feasible if within limits and the unavoidable
    velocity transient while ramping a0 to zero stays inside v_max."""
    if abs(v0) > limits.v_max + 1e-9 or abs(a0) > limits.a_max + 1e-9:
        return False
    v_transient = v0 + a0 * abs(a0) / (2.0 * limits.j_max)
    return abs(v_transient) <= limits.v_max + 1e-9


def _ramp_metrics(v1, a1, v2, limits):
    """Displacement and duration of the (v1, a1) -> (v2, 0) ramp, no segments."""
    jm = limits.j_max
    dv = v2 - v1
    a_pk = _peak_accel(a1, dv, limits)
    d1v = (a_pk * a_pk - a1 * a1) / (2.0 * jm)
    if a_pk < a1:
        d1v = -d1v
    d3v = a_pk * abs(a_pk) / (2.0 * jm)
    t1 = abs(a_pk - a1) / jm
    t3 = abs(a_pk) / jm
    t2 = max((dv - d1v - d3v) / a_pk, 0.0) if abs(a_pk) > 1e-15 else 0.0
    j1 = jm if a_pk >= a1 else -jm
    j3 = -jm if a_pk > 0 else jm
    p, v, a = 0.0, v1, a1
    for dt, j in ((t1, j1), (t2, 0.0), (t3, j3)):
        p += v * dt + 0.5 * a * dt * dt + j * dt**3 / 6.0
        v += a * dt + 0.5 * j * dt * dt
        a += j * dt
    return p, t1 + t2 + t3


def _rest_peak_velocity(dm, limits):
    """Closed-form peak speed for a rest-to-rest move of distance dm > 0."""
    vm, am, jm = limits.v_max, limits.a_max, limits.j_max
    v_tri = (0.25 * dm * dm * jm) ** (1.0 / 3.0)
    if v_tri <= am * am / jm:
        v_pk = v_tri
    else:
        # trapezoidal acceleration: v^2/am + v*(am/jm) = dm
        r = am / jm
        v_pk = 0.5 * (-am * r + np.sqrt(am * am * r * r + 4.0 * am * dm))
    return min(v_pk, vm)


def plan_axis(p0, v0, a0, target, limits):
    """Plan a time-optimal jerk-limited profile to rest at `target`."""
    if not check_initial_state(v0, a0, limits):
        raise PlanningError("infeasible initial state: limits violated at t=0")
    d = target - p0
    if d == 0.0 and v0 == 0.0 and a0 == 0.0:
        return JerkProfile(p0, v0, a0, target, (), limits)

    cruise = 0.0
    if v0 == 0.0 and a0 == 0.0:
        s = 1.0 if d > 0 else -1.0
        v_pk = s * _rest_peak_velocity(abs(d), limits)
        d_ramps = 2.0 * _ramp_metrics(0.0, 0.0, v_pk, limits)[0]
        if abs(d) > abs(d_ramps):
            cruise = (d - d_ramps) / v_pk
    else:
        def disp_of_peak(v_pk):
            d1 = _ramp_metrics(v0, a0, v_pk, limits)[0]
            d2 = _ramp_metrics(v_pk, 0.0, 0.0, limits)[0]
            return d1 + d2

        d_hi = disp_of_peak(limits.v_max)
        d_lo = disp_of_peak(-limits.v_max)
        if d >= d_hi:
            v_pk = limits.v_max
            cruise = (d - d_hi) / v_pk
        elif d <= d_lo:
            v_pk = -limits.v_max
            cruise = (d - d_lo) / v_pk
        else:
            lo, hi = -limits.v_max, limits.v_max
            for _ in range(80):  # bisection saturates double precision by 60
                mid = 0.5 * (lo + hi)
                if disp_of_peak(mid) < d:
                    lo = mid
                else:
                    hi = mid
            v_pk = 0.5 * (lo + hi)

    segs1, _ = _accel_ramp(v0, a0, v_pk, limits)
    segs2, _ = _accel_ramp(v_pk, 0.0, 0.0, limits)
    segments = list(segs1)
    if cruise > 0:
        segments.append((cruise, 0.0))
    segments += segs2
    return JerkProfile(p0, v0, a0, target, tuple(segments), limits)


def synchronize(profiles):
    """Stretch every profile to the common duration T = max axis duration.

    Faster axes are re-planned under uniformly scaled-down limits (bisection
    on the scale) so boundary conditions and limits still hold.
    """
    if not profiles:
        raise PlanningError("need at least one profile")
    T = max(p.duration for p in profiles)
    out = []
    for prof in profiles:
        if abs(prof.duration - T) <= 1e-6:
            out.append(prof)
            continue
        if prof.duration == 0.0 and prof.v0 == 0.0 and prof.a0 == 0.0:
            # hold position for the whole window
            segs = ((T, 0.0),) if T > 0 else ()
            out.append(JerkProfile(prof.p0, 0.0, 0.0, prof.target, segs,
                                   prof.limits))
            continue
        out.append(_stretch(prof, T))
    return out


def _stretch(prof, T):
    lim = prof.limits
    f_lo = 1e-9
    for bound in (abs(prof.v0) / lim.v_max, abs(prof.a0) / lim.a_max):
        f_lo = max(f_lo, min(bound * 1.0000001, 1.0))
    while f_lo < 1.0 and not check_initial_state(prof.v0, prof.a0,
                                                 lim.scaled(f_lo)):
        f_lo = min(f_lo * 1.5, 1.0)

    def duration_at(f):
        return plan_axis(prof.p0, prof.v0, prof.a0, prof.target,
                         lim.scaled(f)).duration

    if duration_at(f_lo) < T - 1e-6:
        raise PlanningError("axis cannot be stretched to the common duration")
    lo, hi = f_lo, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if duration_at(mid) > T:
            lo = mid
        else:
            hi = mid
    f = 0.5 * (lo + hi)
    result = plan_axis(prof.p0, prof.v0, prof.a0, prof.target, lim.scaled(f))
    if abs(result.duration - T) > 1e-6:
        raise PlanningError("bisection failed to match the common duration")
    return result


def clamp_safety(q_target, limits_lo, limits_hi, margin=0.02):
    """Clamp targets away from joint limits by a fraction of each range."""
    if not 0.0 <= margin < 0.5:
        raise ValueError("margin must be in [0, 0.5)")
    q_target = np.asarray(q_target, dtype=float)
    lo = np.asarray(limits_lo, dtype=float)
    hi = np.asarray(limits_hi, dtype=float)
    rng = hi - lo
    clamped = np.clip(q_target, lo + margin * rng, hi - margin * rng)
    n_clamped = int(np.sum(clamped != q_target))
    return clamped, n_clamped


def plan_joint_move(q_from, q_to, limits, margin=0.02, limits_lo=None,
                    limits_hi=None):
    """Plan one synchronized multi-axis move between joint vectors.

    `limits` is a single KinematicLimits applied per axis.  Joint-range safety
    clamping is applied to the target when the model limits are given.
    """
    q_from = np.asarray(q_from, dtype=float)
    q_to = np.asarray(q_to, dtype=float)
    if limits_lo is not None:
        q_to, _ = clamp_safety(q_to, limits_lo, limits_hi, margin)
    profiles = [plan_axis(q_from[i], 0.0, 0.0, q_to[i], limits)
                for i in range(len(q_from))]
    return synchronize(profiles)


def densify(trajectory_dofs, fps, limits, rate=500.0, margin=0.02,
            limits_lo=None, limits_hi=None):
    """Turn waypoint rows (K, n) at `fps` into dense commands at `rate` Hz.

    Consecutive waypoints are bridged with synchronized jerk-limited moves;
    each move is sampled on a uniform grid.  Returns (times, positions).
    """
    trajectory_dofs = np.asarray(trajectory_dofs, dtype=float)
    if trajectory_dofs.ndim != 2 or len(trajectory_dofs) < 1:
        raise PlanningError("need a (K, n) waypoint matrix")
    dt_cmd = 1.0 / rate
    times = [0.0]
    rows = [trajectory_dofs[0]]
    t_base = 0.0
    for k in range(1, len(trajectory_dofs)):
        profs = plan_joint_move(trajectory_dofs[k - 1], trajectory_dofs[k],
                                limits, margin, limits_lo, limits_hi)
        T = max(p.duration for p in profs) if profs else 0.0
        n_steps = max(1, int(np.ceil(T * rate)))
        for s in range(1, n_steps + 1):
            t = min(s * dt_cmd, T)
            rows.append(np.array([sample(p, min(t, p.duration))[0]
                                  for p in profs]))
            times.append(t_base + t)
        t_base += T
    return np.array(times), np.array(rows)
