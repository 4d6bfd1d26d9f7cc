"""Body retargeting: source-skeleton local rotations -> robot DoF values.

Calibration is a dual T-pose alignment: the source skeleton's reference pose
(its T-pose, expressed as local quaternions) is stored per mapped joint, and
retargeting measures each frame's rotation relative to it.  3-D joints map via
exponential coordinates m = beta * a; 1-D joints project the rotation angle
onto the joint axis, beta * (a . n).  Out-of-limit values are clamped, with a
per-clip clamp-fraction report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    IDENTITY_QUAT,
    ensure_sign_continuity,
    quat_inverse,
    quat_log_map,
    quat_multiply,
    quat_normalize,
)
from .model import (
    RobotTrajectory,
    TrajectoryFrame,
    finite_difference_velocities,
    forward_kinematics,
)


class RetargetError(ValueError):
    pass


_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class MappingEntry:
    source_joint: str
    robot_group: str  # DoF name (1d) or DoF name prefix (3d)
    kind: str  # "1d" | "3d"
    axis_order: str = "xyz"  # 3d only: robot-frame component per DoF slot
    align: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        if self.kind not in ("1d", "3d"):
            raise RetargetError(f"unknown mapping kind: {self.kind}")
        if self.kind == "3d" and sorted(self.axis_order) != ["x", "y", "z"]:
            raise RetargetError(f"bad axis order: {self.axis_order}")
        object.__setattr__(self, "align", quat_normalize(self.align))


def load_mapping_table(entries):
    """Build MappingEntry list from parsed JSON rows."""
    out = []
    for e in entries:
        out.append(MappingEntry(
            source_joint=e["source_joint"],
            robot_group=e["robot_group"],
            kind=e["kind"],
            axis_order=e.get("axis_order", "xyz"),
            align=np.asarray(e.get("align", [1.0, 0.0, 0.0, 0.0]), dtype=float),
        ))
    return out


@dataclass(frozen=True)
class TPoseCalibration:
    """Per mapped source joint: T-pose reference rotation + frame alignment."""

    entries: tuple  # of (MappingEntry, source index, robot DoF indices, tpose quat)
    source_joints: int

    def tpose_offset(self, source_joint):
        for entry, si, _, tq in self.entries:
            if entry.source_joint == source_joint:
                return tq
        raise KeyError(source_joint)


def _resolve_group(robot, group, kind):
    if kind == "1d":
        try:
            return [robot.index(group)]
        except KeyError:
            raise RetargetError(f"unmapped group: {group}") from None
    idx = [i for i, d in enumerate(robot.dofs) if d.name.startswith(group)]
    if len(idx) != 3:
        raise RetargetError(
            f"3d group {group!r} must resolve to exactly 3 DoFs, got {len(idx)}"
        )
    return idx


def required_groups(robot):
    """Groups the default calibration must cover: torso + arm chains."""
    groups = {"torso"}
    for side in ("left", "right"):
        groups.update({f"{side}_shoulder", f"{side}_elbow", f"{side}_wrist"})
    return groups


def calibrate(source, robot, mapping, tpose_locals=None, require=None):
    """Build the dual T-pose calibration.

    `tpose_locals` gives the source skeleton's reference-pose local quaternions
    (J, 4); identity (a zero pose) if omitted.  `require` is a set of robot
    groups that must appear in the mapping (defaults to the upper-body chains).
    """
    if tpose_locals is None:
        tpose_locals = np.tile(IDENTITY_QUAT, (source.num_joints, 1))
    tpose_locals = np.asarray(tpose_locals, dtype=float)
    if tpose_locals.shape != (source.num_joints, 4):
        raise RetargetError("tpose_locals shape must be (J, 4)")

    mapped_groups = set()
    entries = []
    for entry in mapping:
        si = source.index(entry.source_joint)
        dof_idx = _resolve_group(robot, entry.robot_group, entry.kind)
        tq = quat_normalize(tpose_locals[si])
        entries.append((entry, si, tuple(dof_idx), tq))
        mapped_groups.add(_strip_side(entry.robot_group))
        mapped_groups.add(entry.robot_group)

    require = required_groups(robot) if require is None else set(require)
    missing = sorted(g for g in require if g not in mapped_groups)
    if missing:
        raise RetargetError(f"unmapped group: {_strip_side(missing[0])}")
    return TPoseCalibration(tuple(entries), source.num_joints)


def _strip_side(group):
    for prefix in ("left_", "right_"):
        if group.startswith(prefix):
            return group[len(prefix):]
    return group


def _to_robot_frame(q_local, tpose_q, align):
    """Rotation relative to the T-pose, expressed in the robot joint frame."""
    rel = quat_multiply(quat_inverse(tpose_q), q_local)
    return quat_multiply(quat_inverse(align), quat_multiply(rel, align))


def map_3d_joint(q_local, offset, axis_order="xyz", limits=None, align=None):
    """Exponential-coordinate mapping m = beta * a for a 3-DoF joint.

    `offset` is the T-pose reference rotation; `align` the frame alignment.
    Returns components ordered per `axis_order`, clamped to `limits` when given.
    """
    align = IDENTITY_QUAT if align is None else align
    m = quat_log_map(_to_robot_frame(quat_normalize(q_local), offset, align))
    vals = np.array([m[_AXIS_INDEX[c]] for c in axis_order])
    if limits is not None:
        lo, hi = limits
        vals = np.clip(vals, lo, hi)
    return vals


def map_1d_joint(q_local, offset, axis, limits=None, align=None):
    """Angle projected onto the joint axis: beta * (a . n)."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise RetargetError("1d joint axis must be unit length")
    align = IDENTITY_QUAT if align is None else align
    m = quat_log_map(_to_robot_frame(quat_normalize(q_local), offset, align))
    val = float(np.dot(m, axis))
    if limits is not None:
        val = min(max(val, limits[0]), limits[1])
    return val


@dataclass
class RetargetReport:
    clamp_fraction: float
    clamped_dofs: dict


def retarget_frame(frame_joints, cal, robot):
    """Map one frame of source local quaternions to a 55-DoF vector."""
    q = np.zeros(robot.num_dofs)
    clamped = []
    for entry, si, dof_idx, tq in cal.entries:
        q_local = frame_joints[si]
        if entry.kind == "3d":
            dofs = [robot.dofs[i] for i in dof_idx]
            lo = np.array([d.limits[0] for d in dofs])
            hi = np.array([d.limits[1] for d in dofs])
            raw = map_3d_joint(q_local, tq, entry.axis_order, align=entry.align)
            vals = np.clip(raw, lo, hi)
            for k, i in enumerate(dof_idx):
                if raw[k] != vals[k]:
                    clamped.append(i)
                q[i] = vals[k]
        else:
            i = dof_idx[0]
            d = robot.dofs[i]
            raw = map_1d_joint(q_local, tq, d.axis, align=entry.align)
            val = min(max(raw, d.limits[0]), d.limits[1])
            if val != raw:
                clamped.append(i)
            q[i] = val
    return q, clamped


def retarget_clip(clip, cal, robot, default_pose=None):
    """Retarget a whole clip; returns (RobotTrajectory, RetargetReport).

    Unmapped DoFs take `default_pose` values (zero if omitted).  Keypoints and
    velocities are populated via FK and backward finite differences.
    """
    if clip.skeleton.num_joints != cal.source_joints:
        raise RetargetError("clip skeleton does not match calibration source")
    if default_pose is None:
        default_pose = np.zeros(robot.num_dofs)

    # sequential sign-continuity prepass per joint
    J = clip.skeleton.num_joints
    quats = np.array([f.joints for f in clip.frames])  # (T, J, 4)
    for j in range(J):
        quats[:, j] = ensure_sign_continuity(quats[:, j])

    mapped = set()
    for _, _, dof_idx, _ in cal.entries:
        mapped.update(dof_idx)

    frames = []
    clamp_counts = {}
    total = 0
    for t in range(clip.num_frames):
        q, clamped = retarget_frame(quats[t], cal, robot)
        for i in range(robot.num_dofs):
            if i not in mapped:
                q[i] = default_pose[i]
        for i in clamped:
            clamp_counts[i] = clamp_counts.get(i, 0) + 1
        total += len(clamped)
        pos, kp, _ = forward_kinematics(robot, q)
        frames.append(TrajectoryFrame(q, kp, pos, np.zeros((robot.num_dofs, 3))))

    traj = RobotTrajectory(clip.fps, frames, robot.name)
    if traj.num_frames >= 2:
        traj = finite_difference_velocities(traj)
    denom = max(1, clip.num_frames * robot.num_dofs)
    report = RetargetReport(
        clamp_fraction=total / denom,
        clamped_dofs={robot.dofs[i].name: c for i, c in sorted(clamp_counts.items())},
    )
    return traj, report


def default_mapping():
    """Default source-joint -> robot-group table for the bundled skeletons."""
    rows = []
    for side in ("left", "right"):
        rows += [
            {"source_joint": f"{side}_shoulder", "robot_group": f"{side}_shoulder",
             "kind": "3d", "axis_order": "yxz"},
            {"source_joint": f"{side}_elbow", "robot_group": f"{side}_elbow",
             "kind": "1d"},
            {"source_joint": f"{side}_wrist", "robot_group": f"{side}_wrist",
             "kind": "3d", "axis_order": "zyx"},
            {"source_joint": f"{side}_hip", "robot_group": f"{side}_hip",
             "kind": "3d", "axis_order": "zxy"},
            {"source_joint": f"{side}_knee", "robot_group": f"{side}_knee",
             "kind": "1d"},
            {"source_joint": f"{side}_ankle", "robot_group": f"{side}_ankle",
             "kind": "1d"},
        ]
    rows.append({"source_joint": "spine3", "robot_group": "torso", "kind": "1d"})
    return load_mapping_table(rows)
