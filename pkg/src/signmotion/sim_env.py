"""Desk-scale surrogate training environment.

This deliberately replaces a full rigid-body simulator.  Each DoF is a
double integrator with per-group inertia driven by a torque-limited PD
controller; the floating base follows reduced inverted-pendulum tilt dynamics
so the lower body faces a genuine stabilization problem:

    tilt_dd = (g/h) * tilt + bias + c_u * (upper-body accel disturbance)
              - c_l * eff * (lower-body corrective torque proxy)

where `eff` decays with the legs' deviation from the default stance, so
drifting legs lose corrective authority.  Contacts are a surrogate: feet are
loaded while the base stays upright and in its height band.  No physical
fidelity is claimed; the PD/torque-limit contract, observation layout, reward
observability, and domain-randomization ranges are what this model preserves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import rewards as rw
from .geometry import quat_from_rpy, quat_to_matrix

GRAVITY = 9.81

OBS_PROPRIO_DIM = 174  # q 55, qd 55, v 3, w 3, g 3, a_prev 55
OBS_GOAL_DIM = 372  # keypoints 42, joint positions 165, joint velocities 165


@dataclass
class RandomizationConfig:
    friction: tuple = (0.6, 2.0)
    base_com_offset: tuple = (-0.07, 0.07)  # m
    base_mass_offset: tuple = (-1.0, 5.0)  # kg
    motor_strength: tuple = (0.8, 1.2)  # x default
    gravity_offset: tuple = (-0.1, 0.1)  # fractional
    link_mass_scale: tuple = (0.7, 1.3)
    pd_gain_scale: tuple = (0.75, 1.25)  # x default
    push_interval: float = 8.0  # s
    push_velocity: float = 0.3  # m/s
    enabled: bool = True

    def sample(self, rng):
        if not self.enabled:
            return {
                "friction": 1.0, "base_com_offset": np.zeros(2),
                "base_mass_offset": 0.0, "motor_strength": 1.0,
                "gravity_offset": 0.0, "link_mass_scale": 1.0,
                "pd_gain_scale": 1.0,
            }
        return {
            "friction": rng.uniform(*self.friction),
            "base_com_offset": rng.uniform(self.base_com_offset[0],
                                           self.base_com_offset[1], size=2),
            "base_mass_offset": rng.uniform(*self.base_mass_offset),
            "motor_strength": rng.uniform(*self.motor_strength),
            "gravity_offset": rng.uniform(*self.gravity_offset),
            "link_mass_scale": rng.uniform(*self.link_mass_scale),
            "pd_gain_scale": rng.uniform(*self.pd_gain_scale),
        }


@dataclass
class EnvConfig:
    dt: float = 0.005
    decimation: int = 4
    action_scale: float = 0.25
    history_len: int = 5
    fall_gravity_xy: float = 0.7
    base_height: float = 1.0  # pendulum height h
    c_upper: float = 0.02  # upper-body disturbance coupling
    c_lower: float = 15.0  # leg joint offset to tilt acceleration coupling
    ankle_stiffness: float = 8.3  # passive restoring, slightly below g/h
    ankle_damping: float = 0.5
    authority_sharpness: float = 2.0  # decay of authority with leg deviation
    com_bias_gain: float = 0.5  # CoM offset -> constant tilt bias
    base_mass: float = 47.0  # kg
    inertia: dict = field(default_factory=lambda: {
        "leg": 2.0, "torso": 1.5, "shoulder": 0.5, "elbow": 0.5,
        "wrist": 0.5, "finger": 0.01})
    reset_noise: float = 0.01
    velocity_lag: float = 0.2  # s, base velocity first-order lag
    contact_height_band: float = 0.15  # m
    contact_tilt_limit: float = 0.3  # rad
    randomization: RandomizationConfig = field(
        default_factory=RandomizationConfig)
    reward_overrides: dict = field(default_factory=dict)  # weight name -> value


@dataclass
class SimState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    roll: float
    pitch: float
    yaw: float
    base_lin_vel: np.ndarray  # (3,)
    base_ang_vel: np.ndarray  # (3,)
    gravity: np.ndarray  # unit, body frame
    keypoints: np.ndarray  # (14, 3) current robot keypoints
    contact: np.ndarray  # (2,) bool
    new_contact: np.ndarray  # (2,) bool
    contact_force: np.ndarray  # (2,) N, normal
    contact_force_xy: np.ndarray  # (2,) N
    air_time: np.ndarray  # (2,) s
    foot_vel_xy: np.ndarray  # (2, 2) m/s
    torques: np.ndarray  # (55,)
    action: np.ndarray  # (55,) current action
    prev_action: np.ndarray  # (55,)
    time: float
    fallen: bool


@dataclass
class ReferenceFrame:
    """Reward/observation view of one reference trajectory frame."""

    dof_pos: np.ndarray
    keypoints: np.ndarray
    joint_pos: np.ndarray
    joint_vel: np.ndarray
    base_lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


@dataclass
class Observation:
    proprio: np.ndarray  # (174,)
    goal: np.ndarray  # (372,)
    history: np.ndarray  # (H, 174 + 372)

    def vector(self):
        cur = np.concatenate([self.proprio, self.goal])
        if self.history.size:
            return np.concatenate([cur, self.history.ravel()])
        return cur


def observation_dim(history_len):
    return (OBS_PROPRIO_DIM + OBS_GOAL_DIM) * (1 + history_len)


def lower_observation_indices(model):
    """Indices into Observation.vector() forming the stabilization view.

    The lower-body policy reads the leg-relevant slice of the observation:
    leg joint state, base velocities, projected gravity, the previous leg
    action, and the reference positions of the leg joints.  The remaining
    features describe the upper-body gesture, which the analytic upper
    policy already consumes, and at desk-scale sample budgets they only
    dilute the stabilization signal.
    """
    low = np.asarray(model.lower_indices, dtype=int)
    n = model.num_dofs
    base = np.arange(2 * n, 2 * n + 9)  # base lin/ang velocity, gravity
    goal_leg = np.concatenate(
        [OBS_PROPRIO_DIM + 42 + 3 * j + np.arange(3) for j in low])
    return np.concatenate([low, n + low, base, 2 * n + 9 + low, goal_leg])


def projected_gravity(roll, pitch, yaw):
    """World gravity direction expressed in the body frame (unit vector)."""
    R = quat_to_matrix(quat_from_rpy(roll, pitch, yaw))
    return R.T @ np.array([0.0, 0.0, -1.0])


def default_standing_pose(model):
    """Default pose: knees slightly bent, everything else zero."""
    q = np.zeros(model.num_dofs)
    for side in ("left", "right"):
        q[model.index(f"{side}_hip_pitch")] = -0.2
        q[model.index(f"{side}_knee")] = 0.4
        q[model.index(f"{side}_ankle")] = -0.2
    return q


def build_observation(state, reference, history=None):
    """Assemble the policy observation from the state and reference frame.

    Goal keypoints/positions/velocities are expressed in the robot heading
    frame (rotated by -yaw) so robot and imitation goal share a direction.
    """
    if reference.keypoints is None or not len(reference.keypoints):
        raise ValueError("reference frame is missing keypoints")
    proprio = np.concatenate([
        state.q, state.qd, state.base_lin_vel, state.base_ang_vel,
        state.gravity, state.prev_action,
    ])
    c, s = np.cos(-state.yaw), np.sin(-state.yaw)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    goal = np.concatenate([
        (reference.keypoints @ Rz.T).ravel(),
        (reference.joint_pos @ Rz.T).ravel(),
        (reference.joint_vel @ Rz.T).ravel(),
    ])
    if proprio.shape != (OBS_PROPRIO_DIM,) or goal.shape != (OBS_GOAL_DIM,):
        raise ValueError("observation dimension mismatch")
    if history is None:
        history = np.zeros((0, OBS_PROPRIO_DIM + OBS_GOAL_DIM))
    obs = Observation(proprio, goal, np.asarray(history, dtype=float))
    if not np.all(np.isfinite(obs.vector())):
        raise ValueError("non-finite observation")
    return obs


class SignTrackingEnv:
    """Single surrogate environment instance tracking one reference clip."""

    def __init__(self, model, config=None, weights=None,
                 forward_kinematics=None):
        from .model import forward_kinematics as fk  # avoid cycle at import
        self.model = model
        self.cfg = config or EnvConfig()
        self.weights = weights or rw.RewardWeights.from_dict(
            dict(self.cfg.reward_overrides))
        self._fk = forward_kinematics or fk
        self.default_pose = default_standing_pose(model)
        self.limits_lo, self.limits_hi = model.limits_arrays()
        self.kp0, self.kd0, self.tau_max = model.gains_arrays()
        self.inertia = np.array(
            [self.cfg.inertia[d.group] for d in model.dofs])
        self.lower = np.asarray(model.lower_indices, dtype=int)
        self.upper = np.asarray(model.upper_indices, dtype=int)
        # leg DoFs that act on pitch / roll through the corrective proxy
        self._pitch_legs = np.array(
            [model.index(f"{s}_{j}") for s in ("left", "right")
             for j in ("hip_pitch", "knee", "ankle")], dtype=int)
        self._pitch_signs = np.array([1.0, -1.0, 1.0, 1.0, -1.0, 1.0])
        self._roll_legs = np.array(
            [model.index(f"{s}_hip_roll") for s in ("left", "right")],
            dtype=int)
        self._roll_signs = np.array([1.0, 1.0])
        larm = [i for i in self.upper
                if model.dofs[i].name.startswith("left_")]
        rarm = [i for i in self.upper
                if model.dofs[i].name.startswith("right_")]
        self._left_upper = np.asarray(larm, dtype=int)
        self._right_upper = np.asarray(rarm, dtype=int)

        self.reference = None
        self.state = None
        self.rng = None

    # -- episode control ---------------------------------------------------

    def reset(self, reference, seed=None, start_frame=None):
        if reference is None or reference.num_frames == 0:
            raise ValueError("empty reference trajectory")
        self.reference = reference
        self.rng = np.random.default_rng(seed)
        self.rand = self.cfg.randomization.sample(self.rng)
        self.kp = self.kp0 * self.rand["pd_gain_scale"]
        self.kd = self.kd0 * self.rand["pd_gain_scale"]
        self.tau_scale = self.rand["motor_strength"]
        self.g_eff = GRAVITY * (1.0 + self.rand["gravity_offset"])
        self.mass = (self.cfg.base_mass + self.rand["base_mass_offset"]) \
            * self.rand["link_mass_scale"]
        self.tilt_bias = (self.cfg.com_bias_gain * GRAVITY
                          * self.rand["base_com_offset"]
                          / self.cfg.base_height)  # (roll, pitch) bias
        if start_frame is None:
            start_frame = int(self.rng.integers(0, reference.num_frames))
        self.cursor0 = start_frame
        self.t = 0.0
        self.next_push = self.cfg.randomization.push_interval
        self.tilt = np.zeros(2)  # roll, pitch
        self.tilt_rate = np.zeros(2)
        self.base_vel = np.zeros(3)

        q = self.default_pose.copy()
        if self.cfg.reset_noise > 0:
            q = q + self.rng.uniform(-self.cfg.reset_noise,
                                     self.cfg.reset_noise, self.model.num_dofs)
        q = np.clip(q, self.limits_lo, self.limits_hi)
        self._make_state(q, np.zeros_like(q), np.zeros_like(q),
                         np.zeros(self.model.num_dofs),
                         np.zeros(self.model.num_dofs))
        self.history = []
        return self._observe()

    def _make_state(self, q, qd, qdd, action, prev_action, torques=None):
        roll, pitch = self.tilt
        g = projected_gravity(roll, pitch, 0.0)
        _, keypoints, _ = self._fk(self.model, q)
        contact, forces, forces_xy, foot_vel = self._contact_surrogate()
        if self.state is None:
            prev_contact = np.array([True, True])
            air = np.zeros(2)
        else:
            prev_contact = self.state.contact
            air = self.state.air_time.copy()
        new_contact = contact & ~prev_contact
        dt_ctrl = self.cfg.dt * self.cfg.decimation
        air = np.where(contact, 0.0, air + dt_ctrl)
        fallen = bool(np.linalg.norm(g[:2]) > self.cfg.fall_gravity_xy)
        self.state = SimState(
            q=q, qd=qd, qdd=qdd, roll=roll, pitch=pitch, yaw=0.0,
            base_lin_vel=self.base_vel.copy(),
            base_ang_vel=np.array([self.tilt_rate[0], self.tilt_rate[1], 0.0]),
            gravity=g, keypoints=keypoints,
            contact=contact, new_contact=new_contact,
            contact_force=forces, contact_force_xy=forces_xy,
            air_time=air, foot_vel_xy=foot_vel,
            torques=np.zeros(self.model.num_dofs) if torques is None else torques,
            action=action, prev_action=prev_action,
            time=self.t, fallen=fallen,
        )
        return self.state

    def _contact_surrogate(self):
        tilt_mag = float(np.linalg.norm(self.tilt))
        h = self.cfg.base_height * np.cos(tilt_mag)
        in_band = abs(h - self.cfg.base_height) < self.cfg.contact_height_band
        grounded = in_band and tilt_mag < self.cfg.contact_tilt_limit
        contact = np.array([grounded, grounded])
        if grounded:
            share = np.clip(0.5 + np.array([1.0, -1.0]) * self.tilt[0], 0.0, 1.0)
            v_z = abs(self.base_vel[2])
            forces = share * self.mass * GRAVITY + 50.0 * v_z
            foot_vel = np.zeros((2, 2))
        else:
            forces = np.zeros(2)
            foot_vel = np.tile(self.base_vel[:2], (2, 1))
        forces_xy = 0.1 * forces * float(np.linalg.norm(self.tilt))
        return contact, forces, forces_xy, foot_vel

    def reference_frame(self):
        k = min(self.cursor0 + int(round(self.t * self.reference.fps)),
                self.reference.num_frames - 1)
        f = self.reference.frames[k]
        return ReferenceFrame(f.dof_pos, f.keypoints, f.joint_pos, f.joint_vel)

    def reference_done(self):
        k = self.cursor0 + int(round(self.t * self.reference.fps))
        return k >= self.reference.num_frames - 1

    def _observe(self):
        hist = np.array(self.history[-self.cfg.history_len:]) \
            if self.cfg.history_len else None
        if hist is not None and len(hist) < self.cfg.history_len:
            pad = np.zeros((self.cfg.history_len - len(hist),
                            OBS_PROPRIO_DIM + OBS_GOAL_DIM))
            hist = np.vstack([pad, hist]) if hist.size else pad
        obs = build_observation(self.state, self.reference_frame(), hist)
        if self.cfg.history_len:
            self.history.append(np.concatenate([obs.proprio, obs.goal]))
        return obs

    # -- dynamics ----------------------------------------------------------

    def step(self, action):
        action = np.asarray(action, dtype=float)
        if action.shape != (self.model.num_dofs,) or \
                not np.all(np.isfinite(action)):
            raise ValueError("non-finite or mis-shaped action")
        prev_action = self.state.action
        q, qd = self.state.q.copy(), self.state.qd.copy()
        target = self.default_pose + self.cfg.action_scale * action
        friction = self.rand["friction"]
        dt = self.cfg.dt
        tau = np.zeros_like(q)
        qdd = np.zeros_like(q)
        for _ in range(self.cfg.decimation):
            tau = np.clip(self.kp * (target - q) - self.kd * qd,
                          -self.tau_max * self.tau_scale,
                          self.tau_max * self.tau_scale)
            qdd = (tau - friction * self.inertia * qd) / self.inertia
            qd = qd + qdd * dt  # semi-implicit Euler
            q = q + qd * dt
            self._step_base(qdd, tau, dt, q)
            self.t += dt
            if self.t >= self.next_push - 1e-12:
                self.apply_push()
                self.next_push += self.cfg.randomization.push_interval

        state = self._make_state(q, qd, qdd, action, prev_action, tau)
        ref = self.reference_frame()
        reward, breakdown = rw.total_reward(
            state, ref, prev_action, self.limits_lo, self.limits_hi,
            self.default_pose[self.lower], self.lower, self.weights)
        done = state.fallen or self.reference_done()
        obs = self._observe()
        info = {"breakdown": breakdown, "fallen": state.fallen,
                "time": self.t, "torques": tau}
        return obs, reward, done, info

    def _step_base(self, qdd, tau, dt, q=None):
        cfg = self.cfg
        lam = self.g_eff / cfg.base_height
        if q is None:
            q = self.state.q
        up_acc = float(np.linalg.norm(qdd[self.upper])) / max(
            1, len(self.upper))
        asym = (float(np.linalg.norm(qdd[self._left_upper]))
                - float(np.linalg.norm(qdd[self._right_upper]))) / max(
                    1, len(self._left_upper))
        dq_low = q[self.lower] - self.default_pose[self.lower]
        eff = float(np.exp(-cfg.authority_sharpness * np.sum(dq_low ** 2)))
        dq = q - self.default_pose
        u_pitch = float(np.mean(dq[self._pitch_legs] * self._pitch_signs))
        u_roll = float(np.mean(dq[self._roll_legs] * self._roll_signs))
        # passive ankles leave the pendulum mildly unstable, so standing
        # still is not enough; leg joint offsets shift the center of
        # pressure and act as the corrective input, with authority that
        # shrinks as the legs drift far from the default pose
        k_eff = lam - cfg.ankle_stiffness
        tilt_acc = np.array([
            k_eff * self.tilt[0] - cfg.ankle_damping * self.tilt_rate[0]
            + self.tilt_bias[0] + cfg.c_upper * asym
            - cfg.c_lower * eff * u_roll,
            k_eff * self.tilt[1] - cfg.ankle_damping * self.tilt_rate[1]
            + self.tilt_bias[1] + cfg.c_upper * up_acc
            - cfg.c_lower * eff * u_pitch,
        ])
        self.tilt_rate = self.tilt_rate + tilt_acc * dt
        self.tilt = self.tilt + self.tilt_rate * dt
        # base velocity follows the tilt with a first-order lag
        h = cfg.base_height
        v_target = np.array([h * self.tilt_rate[1], -h * self.tilt_rate[0]])
        alpha = dt / max(cfg.velocity_lag, dt)
        self.base_vel[:2] += alpha * (v_target - self.base_vel[:2])
        tilt_mag = float(np.linalg.norm(self.tilt))
        rate_along = float(np.dot(self.tilt, self.tilt_rate)) / max(
            tilt_mag, 1e-9)
        self.base_vel[2] = -h * np.sin(tilt_mag) * rate_along

    def apply_push(self):
        """Planar velocity impulse of fixed magnitude, random direction."""
        phi = self.rng.uniform(0.0, 2.0 * np.pi)
        dv = self.cfg.randomization.push_velocity * np.array(
            [np.cos(phi), np.sin(phi)])
        self.base_vel[:2] += dv
        # impulse on the pendulum: x velocity kicks pitch rate, y kicks roll
        self.tilt_rate[1] += dv[0] / self.cfg.base_height
        self.tilt_rate[0] -= dv[1] / self.cfg.base_height
