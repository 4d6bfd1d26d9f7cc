"""Synthetic sign-motion corpus for desk-scale testing and training.

Clips move the arms/hands with band-limited sinusoid gestures over a gentle
anti-phase leg sway; everything is generated from a seed so test corpora are
reproducible.
"""

from __future__ import annotations

import numpy as np

from .model import (
    MotionClip,
    MotionFrame,
    RobotTrajectory,
    TrajectoryFrame,
    default_source_skeleton,
    finite_difference_velocities,
    forward_kinematics,
)
from .geometry import quat_from_axis_angle
from .sim_env import default_standing_pose


def synthetic_trajectory(model, seed=0, num_frames=120, fps=30.0,
                         amplitude=0.35, max_hz=0.6, leg_amplitude=0.15):
    """One synthetic robot gesture clip.

    Arms and hands move with band-limited sinusoid gestures; the legs sway
    gently around the default stance in left/right anti-phase (weight
    shifting), so the lower-body reference is not simply the static pose.
    """
    rng = np.random.default_rng(seed)
    base = default_standing_pose(model)
    lo, hi = model.limits_arrays()
    t = np.arange(num_frames) / fps
    q = np.tile(base, (num_frames, 1))
    upper = np.asarray(model.upper_indices, dtype=int)
    for i in upper:
        amp = amplitude * rng.uniform(0.2, 1.0)
        if model.dofs[i].group == "finger":
            amp *= 0.8
        hz = rng.uniform(0.1, max_hz)
        phase = rng.uniform(0.0, 2 * np.pi)
        center = base[i] + rng.uniform(-0.1, 0.1)
        q[:, i] = center + amp * np.sin(2 * np.pi * hz * t + phase)
    if leg_amplitude > 0.0:
        for joint in ("hip_pitch", "hip_roll", "knee", "ankle"):
            amp = leg_amplitude * rng.uniform(0.4, 1.0)
            hz = rng.uniform(0.1, 0.35)
            phase = rng.uniform(0.0, 2 * np.pi)
            sway = amp * np.sin(2 * np.pi * hz * t + phase)
            q[:, model.index(f"left_{joint}")] += sway
            q[:, model.index(f"right_{joint}")] -= sway
    q = np.clip(q, lo, hi)
    frames = []
    for k in range(num_frames):
        pos, kp, _ = forward_kinematics(model, q[k])
        frames.append(TrajectoryFrame(q[k], kp, pos,
                                      np.zeros((model.num_dofs, 3))))
    traj = RobotTrajectory(fps, frames, model.name)
    return finite_difference_velocities(traj)


def synthetic_corpus(model, num_clips=5, seed=0, num_frames=120, fps=30.0,
                     amplitude=0.35, leg_amplitude=0.15):
    rng = np.random.default_rng(seed)
    return [
        synthetic_trajectory(model, seed=int(rng.integers(2 ** 31)),
                             num_frames=num_frames, fps=fps,
                             amplitude=amplitude, leg_amplitude=leg_amplitude)
        for _ in range(num_clips)
    ]


def synthetic_motion_clip(seed=0, num_frames=60, fps=30.0, amplitude=0.4):
    """A smooth synthetic source-skeleton clip for retargeting tests."""
    rng = np.random.default_rng(seed)
    skel = default_source_skeleton()
    t = np.arange(num_frames) / fps
    # random slow rotations on arm joints, identity elsewhere
    animated = ["left_shoulder", "right_shoulder", "left_elbow",
                "right_elbow", "left_wrist", "right_wrist", "spine3"]
    params = {}
    for name in animated:
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        params[name] = (axis, amplitude * rng.uniform(0.3, 1.0),
                        rng.uniform(0.1, 0.5), rng.uniform(0, 2 * np.pi))
    frames = []
    for k in range(num_frames):
        joints = np.tile([1.0, 0.0, 0.0, 0.0], (skel.num_joints, 1))
        for name, (axis, amp, hz, ph) in params.items():
            angle = amp * np.sin(2 * np.pi * hz * t[k] + ph)
            joints[skel.index(name)] = quat_from_axis_angle(axis, angle)
        frames.append(MotionFrame(np.zeros(3), np.array([1.0, 0, 0, 0]),
                                  joints))
    return MotionClip(fps, skel, frames)


def synthetic_corpus_lengths(counts=(929, 4558, 1089), thresholds=(80, 200),
                             seed=0):
    """Clip-length list engineered to hit given difficulty-bucket counts."""
    rng = np.random.default_rng(seed)
    easy_n, med_n, hard_n = counts
    easy_below, hard_above = thresholds
    lengths = np.concatenate([
        rng.integers(10, easy_below, size=easy_n),
        rng.integers(easy_below, hard_above + 1, size=med_n),
        rng.integers(hard_above + 1, hard_above + 400, size=hard_n),
    ])
    rng.shuffle(lengths)
    return lengths.tolist()
