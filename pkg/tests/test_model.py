"""Robot model, forward kinematics, and serialization tests.

The FK oracle composes homogeneous transforms with rotation matrices,
independently of the quaternion chain in the implementation.
"""

import numpy as np
import pytest

from signmotion.geometry import quat_from_axis_angle, quat_to_matrix
from signmotion.model import (
    DimensionError,
    MotionClip,
    MotionFrame,
    RobotTrajectory,
    TrajectoryFrame,
    build_h1x55,
    default_robot_model,
    default_source_skeleton,
    finite_difference_velocities,
    forward_kinematics,
    load_motion_clip,
    load_robot_model,
    load_trajectory,
    robot_model_from_dict,
    robot_model_to_dict,
    save_motion_clip,
    save_robot_model,
    save_trajectory,
)


def fk_matrix_oracle(model, q, root_t=None):
    """Independent FK: 3x3 matrix chain instead of quaternion composition."""
    n = model.num_dofs
    pos = np.empty((n, 3))
    rot = np.empty((n, 3, 3))
    root_t = np.zeros(3) if root_t is None else np.asarray(root_t)
    for i, d in enumerate(model.dofs):
        if d.parent < 0:
            p_pos, p_rot = root_t, np.eye(3)
        else:
            p_pos, p_rot = pos[d.parent], rot[d.parent]
        pos[i] = p_pos + p_rot @ d.offset
        R = quat_to_matrix(quat_from_axis_angle(np.asarray(d.axis), q[i]))
        rot[i] = p_rot @ R
    return pos


@pytest.fixture(scope="module")
def model():
    return default_robot_model()


def test_h1x55_structure(model):
    assert model.num_dofs == 55
    assert len(model.keypoints) == 14
    assert len(model.lower_indices) == 10
    assert len(model.upper_indices) == 45
    assert set(model.lower_indices) | set(model.upper_indices) == set(range(55))
    assert not set(model.lower_indices) & set(model.upper_indices)


def test_h1x55_gain_table(model):
    expected = {
        "hip": (200.0, 5.0, 170.0),
        "knee": (300.0, 6.0, 255.0),
        "ankle": (40.0, 2.0, 34.0),
        "torso": (200.0, 5.0, 170.0),
        "shoulder": (30.0, 2.0, 34.0),
        "elbow": (30.0, 2.0, 18.0),
        "finger": (30.0, 2.0, 18.0),
    }
    for d in model.dofs:
        key = "hip" if d.group == "leg" and "hip" in d.name else (
            "knee" if "knee" in d.name else (
                "ankle" if "ankle" in d.name else d.group))
        if key == "wrist":
            key = "elbow"  # wrists share the elbow/hand gain row
        kp, kd, tau = expected[key]
        assert d.stiffness == kp, d.name
        assert d.damping == kd, d.name
        assert d.torque_limit == tau, d.name


def test_fk_matches_matrix_oracle(model):
    rng = np.random.default_rng(0)
    lo, hi = model.limits_arrays()
    for _ in range(20):
        q = rng.uniform(lo, hi)
        pos, kp, _ = forward_kinematics(model, q)
        oracle = fk_matrix_oracle(model, q)
        assert np.allclose(pos, oracle, atol=1e-10)
        assert np.allclose(kp, oracle[list(model.keypoints)], atol=1e-10)


def test_fk_translation_equivariance(model):
    rng = np.random.default_rng(1)
    q = rng.uniform(-0.3, 0.3, model.num_dofs)
    t = np.array([0.4, -1.2, 0.7])
    pos0, _, _ = forward_kinematics(model, q)
    pos1, _, _ = forward_kinematics(model, q, root_t=t)
    assert np.allclose(pos1, pos0 + t, atol=1e-12)


def test_fk_rejects_bad_shape(model):
    with pytest.raises(DimensionError):
        forward_kinematics(model, np.zeros(54))


def test_constant_clip_zero_velocities(model):
    q = np.zeros(model.num_dofs)
    pos, kp, _ = forward_kinematics(model, q)
    frames = [TrajectoryFrame(q, kp, pos, np.zeros((55, 3)))
              for _ in range(5)]
    traj = finite_difference_velocities(RobotTrajectory(30.0, frames))
    for f in traj.frames:
        assert np.allclose(f.joint_vel, 0.0)


def test_finite_difference_velocity_values(model):
    rng = np.random.default_rng(2)
    frames = []
    for k in range(4):
        q = rng.uniform(-0.2, 0.2, model.num_dofs)
        pos, kp, _ = forward_kinematics(model, q)
        frames.append(TrajectoryFrame(q, kp, pos, np.zeros((55, 3))))
    traj = finite_difference_velocities(RobotTrajectory(50.0, frames))
    for k in range(1, 4):
        expect = (frames[k].joint_pos - frames[k - 1].joint_pos) * 50.0
        assert np.allclose(traj.frames[k].joint_vel, expect, atol=1e-12)
    assert np.allclose(traj.frames[0].joint_vel, traj.frames[1].joint_vel)


def test_single_frame_velocities_error(model):
    q = np.zeros(model.num_dofs)
    pos, kp, _ = forward_kinematics(model, q)
    traj = RobotTrajectory(30.0, [TrajectoryFrame(q, kp, pos,
                                                  np.zeros((55, 3)))])
    with pytest.raises(ValueError):
        finite_difference_velocities(traj)


def test_robot_model_json_round_trip(model, tmp_path):
    p = tmp_path / "robot.json"
    save_robot_model(model, p)
    loaded = load_robot_model(p)
    assert loaded.num_dofs == model.num_dofs
    for a, b in zip(loaded.dofs, model.dofs):
        assert a.name == b.name and a.parent == b.parent
        assert np.allclose(a.axis, b.axis)
        assert np.allclose(a.offset, b.offset)
        assert a.limits == b.limits
        assert (a.stiffness, a.damping, a.torque_limit) == \
            (b.stiffness, b.damping, b.torque_limit)
    d1 = robot_model_to_dict(model)
    assert robot_model_to_dict(robot_model_from_dict(d1)) == d1


def test_bundled_model_matches_builder(model):
    built = build_h1x55()
    assert robot_model_to_dict(built) == robot_model_to_dict(model)


def test_motion_clip_round_trip(tmp_path):
    skel = default_source_skeleton()
    rng = np.random.default_rng(3)
    frames = []
    for _ in range(3):
        quats = rng.standard_normal((skel.num_joints, 4))
        quats /= np.linalg.norm(quats, axis=1, keepdims=True)
        frames.append(MotionFrame(rng.standard_normal(3),
                                  np.array([1.0, 0, 0, 0]), quats))
    clip = MotionClip(30.0, skel, frames)
    p = tmp_path / "clip.json"
    save_motion_clip(clip, p)
    loaded = load_motion_clip(p)
    assert loaded.fps == clip.fps
    assert loaded.skeleton.num_joints == skel.num_joints
    for a, b in zip(loaded.frames, clip.frames):
        # loader canonicalizes quaternion signs; same rotation either way
        for qa, qb in zip(a.joints, b.joints):
            assert min(np.abs(qa - qb).max(), np.abs(qa + qb).max()) < 1e-12
        assert np.allclose(a.root_t, b.root_t, atol=1e-12)


def test_trajectory_round_trip(model, tmp_path):
    rng = np.random.default_rng(4)
    frames = []
    for _ in range(3):
        q = rng.uniform(-0.2, 0.2, model.num_dofs)
        pos, kp, _ = forward_kinematics(model, q)
        frames.append(TrajectoryFrame(q, kp, pos,
                                      rng.standard_normal((55, 3))))
    traj = RobotTrajectory(30.0, frames, model.name)
    p = tmp_path / "traj.json"
    save_trajectory(traj, p)
    loaded = load_trajectory(p)
    assert loaded.fps == traj.fps
    for a, b in zip(loaded.frames, traj.frames):
        assert np.allclose(a.dof_pos, b.dof_pos, atol=1e-12)
        assert np.allclose(a.joint_vel, b.joint_vel, atol=1e-12)


def test_mismatched_frame_raises():
    skel = default_source_skeleton()
    bad = MotionFrame(np.zeros(3), np.array([1.0, 0, 0, 0]),
                      np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        MotionClip(30.0, skel, [bad])
