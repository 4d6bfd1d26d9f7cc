"""Reward terms for the tracking policy: task, penalty, and regularization.

Total reward is the weighted sum over all terms; the three groups are also
reported separately so r = beta_T*r_T + beta_P*r_P + beta_R*r_R with the group
multipliers defaulting to 1.  Error norms inside the exponential task kernels
are means over DoFs/keypoints so the kernels keep gradient signal at 55 DoFs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

TASK_TERMS = ("dof_position", "keypoint_position", "body_lin_velocity",
              "body_roll", "body_pitch", "body_yaw")
PENALTY_TERMS = ("dof_pos_limit", "alive")
REG_TERMS = ("time_in_air", "drag", "contact_force", "stumble",
             "dof_acceleration", "action_rate", "energy",
             "dof_limit_violation", "dof_deviation", "vertical_lin_velocity",
             "horizontal_ang_velocity", "projected_gravity")
ALL_TERMS = TASK_TERMS + PENALTY_TERMS + REG_TERMS


@dataclass
class RewardWeights:
    dof_position: float = 6.0
    keypoint_position: float = 5.0
    body_lin_velocity: float = 6.0
    body_roll: float = 1.0
    body_pitch: float = 1.0
    body_yaw: float = 1.0
    dof_pos_limit: float = -1e-2
    alive: float = 1.0
    time_in_air: float = 10.0
    drag: float = -0.1
    contact_force: float = -3e-3
    stumble: float = -2.0
    dof_acceleration: float = -3e-7
    action_rate: float = -1e-1
    energy: float = -1e-3
    dof_limit_violation: float = -10.0
    dof_deviation: float = -1e-1
    vertical_lin_velocity: float = -1.0
    horizontal_ang_velocity: float = -0.4
    projected_gravity: float = -2.0
    contact_force_threshold: float = 500.0  # N, not a weight
    beta_task: float = 1.0
    beta_penalty: float = 1.0
    beta_regularization: float = 1.0

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown reward weight keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class RewardBreakdown:
    unweighted: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)

    @property
    def total(self):
        return sum(self.weighted.values())

    def group_total(self, terms):
        return sum(self.weighted[t] for t in terms if t in self.weighted)


def task_rewards(state, reference, weights):
    """Exponential tracking kernels against the reference frame."""
    b = RewardBreakdown()
    dof_err = float(np.mean(np.abs(reference.dof_pos - state.q)))
    _put(b, weights, "dof_position", np.exp(-0.7 * dof_err), weights.beta_task)

    kp_err = float(np.mean(np.linalg.norm(
        reference.keypoints - state.keypoints, axis=-1)))
    _put(b, weights, "keypoint_position", np.exp(-kp_err), weights.beta_task)

    v_err = float(np.linalg.norm(reference.base_lin_vel - state.base_lin_vel))
    _put(b, weights, "body_lin_velocity", np.exp(-4.0 * v_err), weights.beta_task)

    _put(b, weights, "body_roll",
         np.exp(-abs(reference.roll - state.roll)), weights.beta_task)
    _put(b, weights, "body_pitch",
         np.exp(-abs(reference.pitch - state.pitch)), weights.beta_task)
    _put(b, weights, "body_yaw",
         np.exp(-abs(reference.yaw - state.yaw)), weights.beta_task)
    return b


def penalty_rewards(state, limits_lo, limits_hi, weights):
    b = RewardBreakdown()
    n_out = float(np.sum((state.q < limits_lo) | (state.q > limits_hi)))
    _put(b, weights, "dof_pos_limit", n_out, weights.beta_penalty)
    _put(b, weights, "alive", 0.0 if state.fallen else 1.0,
         weights.beta_penalty)
    return b


def regularization_rewards(state, prev_action, limits_lo, limits_hi,
                           default_pose_lower, lower_indices, weights):
    b = RewardBreakdown()
    g = weights.beta_regularization

    new_contact = np.asarray(state.new_contact, dtype=bool)
    air = float(np.sum(np.asarray(state.air_time)[new_contact]))
    _put(b, weights, "time_in_air", air, g)

    drag = float(np.sum(
        np.linalg.norm(np.asarray(state.foot_vel_xy), axis=-1)[new_contact]))
    _put(b, weights, "drag", drag, g)

    F = np.abs(np.asarray(state.contact_force, dtype=float))
    th = weights.contact_force_threshold
    _put(b, weights, "contact_force", float(np.sum((F >= th) * (F - th))), g)

    F_xy = np.abs(np.asarray(state.contact_force_xy, dtype=float))
    F_z = np.abs(np.asarray(state.contact_force, dtype=float))
    _put(b, weights, "stumble", 1.0 if np.any(F_xy > 4.0 * F_z) else 0.0, g)

    _put(b, weights, "dof_acceleration", float(np.mean(state.qdd ** 2)), g)

    _put(b, weights, "action_rate",
         float(np.mean(np.abs(state.action - prev_action))), g)

    _put(b, weights, "energy", float(np.mean(state.qd ** 2)), g)

    viol = float(np.sum((state.q < limits_lo) | (state.q > limits_hi)))
    _put(b, weights, "dof_limit_violation", viol, g)

    low = np.asarray(lower_indices, dtype=int)
    dev = float(np.sum((default_pose_lower - state.q[low]) ** 2))
    _put(b, weights, "dof_deviation", dev, g)

    _put(b, weights, "vertical_lin_velocity", float(state.base_lin_vel[2] ** 2), g)
    _put(b, weights, "horizontal_ang_velocity",
         float(np.sum(np.asarray(state.base_ang_vel[:2]) ** 2)), g)
    _put(b, weights, "projected_gravity",
         float(np.sum(np.asarray(state.gravity[:2]) ** 2)), g)
    return b


def total_reward(state, reference, prev_action, limits_lo, limits_hi,
                 default_pose_lower, lower_indices, weights):
    """Weighted sum of all groups; returns (scalar, RewardBreakdown)."""
    b = RewardBreakdown()
    for part in (
        task_rewards(state, reference, weights),
        penalty_rewards(state, limits_lo, limits_hi, weights),
        regularization_rewards(state, prev_action, limits_lo, limits_hi,
                               default_pose_lower, lower_indices, weights),
    ):
        b.unweighted.update(part.unweighted)
        b.weighted.update(part.weighted)
    return b.total, b


def _put(b, weights, name, value, group_beta):
    b.unweighted[name] = float(value)
    b.weighted[name] = float(value) * getattr(weights, name) * group_beta
