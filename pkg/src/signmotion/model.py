"""Neutral data model: skeletons, robot models, motion clips, trajectories, FK.

The default robot model ("H1X-55") is an H1-style biped with 3-DoF wrists and
two 15-DoF hands, for 55 actuated DoFs total:

    10 leg + 1 torso + 2 x (3 shoulder + 1 elbow + 3 wrist) + 2 x 15 finger

PD gains and torque limits follow the per-joint-family torque table
(hip/knee/ankle/torso/shoulder/elbow/hand).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .geometry import (
    IDENTITY_QUAT,
    quat_multiply,
    quat_normalize,
    quat_rotate,
)

NUM_DOFS = 55
NUM_KEYPOINTS = 14


class DimensionError(ValueError):
    """Raised on vector/joint-count mismatches."""


@dataclass(frozen=True)
class Dof:
    """One actuated rotational axis of the robot."""

    name: str
    parent: int  # index of parent DoF link, -1 for the floating base
    axis: np.ndarray  # unit rotation axis in the parent link frame
    offset: np.ndarray  # translation from parent link origin, meters
    limits: tuple  # (q_min, q_max) rad
    stiffness: float  # N*m/rad
    damping: float  # N*m*s/rad
    torque_limit: float  # N*m
    group: str  # leg | torso | shoulder | elbow | wrist | finger

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"DoF {self.name}: axis must be unit length")
        if not self.limits[0] < self.limits[1]:
            raise ValueError(f"DoF {self.name}: q_min must be < q_max")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))


@dataclass(frozen=True)
class Site:
    """Fixed point rigidly attached to a DoF link (e.g. a fingertip)."""

    name: str
    parent: int
    offset: np.ndarray


@dataclass(frozen=True)
class RobotModel:
    dofs: tuple
    keypoints: tuple  # 14 DoF-link indices used as reference keypoints
    lower_indices: tuple  # leg DoFs
    upper_indices: tuple  # everything else
    sites: tuple = ()
    name: str = "robot"

    def __post_init__(self):
        names = [d.name for d in self.dofs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate DoF names")
        for i, d in enumerate(self.dofs):
            if d.parent >= i:
                raise ValueError("DoFs must be topologically sorted")
        covered = sorted(self.lower_indices + self.upper_indices)
        if covered != list(range(len(self.dofs))):
            raise ValueError("upper/lower partition must cover all DoFs disjointly")

    @property
    def num_dofs(self):
        return len(self.dofs)

    def index(self, name):
        for i, d in enumerate(self.dofs):
            if d.name == name:
                return i
        raise KeyError(name)

    def site_index(self, name):
        for i, s in enumerate(self.sites):
            if s.name == name:
                return i
        raise KeyError(name)

    def limits_arrays(self):
        lo = np.array([d.limits[0] for d in self.dofs])
        hi = np.array([d.limits[1] for d in self.dofs])
        return lo, hi

    def gains_arrays(self):
        kp = np.array([d.stiffness for d in self.dofs])
        kd = np.array([d.damping for d in self.dofs])
        tau = np.array([d.torque_limit for d in self.dofs])
        return kp, kd, tau

    def group_indices(self, group):
        return [i for i, d in enumerate(self.dofs) if d.group == group]


@dataclass(frozen=True)
class SourceSkeleton:
    """Topologically sorted joint tree of the motion source (55 joints)."""

    joints: tuple  # of (name, parent index, T-pose offset vector in meters)
    metadata: dict = field(default_factory=dict)  # shape betas etc., opaque

    def __post_init__(self):
        roots = 0
        for i, (name, parent, offset) in enumerate(self.joints):
            if parent == -1:
                roots += 1
            elif parent >= i:
                raise ValueError(f"joint {name}: parent index must precede joint")
        if roots != 1:
            raise ValueError("skeleton must have exactly one root")

    @property
    def num_joints(self):
        return len(self.joints)

    def index(self, name):
        for i, (jname, _, _) in enumerate(self.joints):
            if jname == name:
                return i
        raise KeyError(name)


@dataclass
class MotionFrame:
    root_t: np.ndarray  # meters
    root_q: np.ndarray  # [w, x, y, z]
    joints: np.ndarray  # (J, 4) local quaternions


@dataclass
class MotionClip:
    fps: float
    skeleton: SourceSkeleton
    frames: list

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        J = self.skeleton.num_joints
        for f in self.frames:
            if f.joints.shape != (J, 4):
                raise DimensionError("frame joint count does not match skeleton")

    @property
    def num_frames(self):
        return len(self.frames)


@dataclass
class TrajectoryFrame:
    dof_pos: np.ndarray  # (55,) rad
    keypoints: np.ndarray  # (14, 3) m
    joint_pos: np.ndarray  # (55, 3) m
    joint_vel: np.ndarray  # (55, 3) m/s


@dataclass
class RobotTrajectory:
    fps: float
    frames: list
    model_name: str = "robot"

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def num_frames(self):
        return len(self.frames)

    def dof_matrix(self):
        return np.array([f.dof_pos for f in self.frames])


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------

def forward_kinematics(model, q, root_t=None, root_q=None):
    """Compose link frames down the tree.

    Returns (joint_positions (N,3), keypoints (14,3), site_positions (S,3)).
    Rotations: each DoF rotates its own link frame about its axis; offsets are
    expressed in the parent link frame.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (model.num_dofs,):
        raise DimensionError(
            f"expected q of shape ({model.num_dofs},), got {q.shape}"
        )
    root_t = np.zeros(3) if root_t is None else np.asarray(root_t, dtype=float)
    root_q = IDENTITY_QUAT if root_q is None else quat_normalize(root_q)

    n = model.num_dofs
    pos = np.empty((n, 3))
    rot = np.empty((n, 4))
    for i, d in enumerate(model.dofs):
        if d.parent < 0:
            parent_pos, parent_rot = root_t, root_q
        else:
            parent_pos, parent_rot = pos[d.parent], rot[d.parent]
        pos[i] = parent_pos + quat_rotate(parent_rot, d.offset)
        half = 0.5 * q[i]
        local = np.empty(4)
        local[0] = np.cos(half)
        local[1:] = np.sin(half) * d.axis
        rot[i] = quat_multiply(parent_rot, local)

    keypoints = pos[list(model.keypoints)]
    if model.sites:
        sites = np.array([
            pos[s.parent] + quat_rotate(rot[s.parent], s.offset)
            for s in model.sites
        ])
    else:
        sites = np.zeros((0, 3))
    return pos, keypoints, sites


def finite_difference_velocities(traj):
    """Populate joint linear velocities by backward differences at the clip fps.

    velocity[k] = (pos[k] - pos[k-1]) * fps, velocity[0] = velocity[1].
    """
    if traj.num_frames < 2:
        raise ValueError("need at least 2 frames for finite differencing")
    frames = []
    for k, f in enumerate(traj.frames):
        if k == 0:
            vel = (traj.frames[1].joint_pos - traj.frames[0].joint_pos) * traj.fps
        else:
            vel = (f.joint_pos - traj.frames[k - 1].joint_pos) * traj.fps
        frames.append(TrajectoryFrame(f.dof_pos.copy(), f.keypoints.copy(),
                                      f.joint_pos.copy(), vel))
    return RobotTrajectory(traj.fps, frames, traj.model_name)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def skeleton_to_dict(skel):
    return {
        "joints": [
            {"name": n, "parent": p, "offset": list(map(float, o))}
            for n, p, o in skel.joints
        ],
        "metadata": skel.metadata,
    }


def skeleton_from_dict(d):
    joints = tuple(
        (j["name"], int(j["parent"]), np.asarray(j["offset"], dtype=float))
        for j in d["joints"]
    )
    return SourceSkeleton(joints, d.get("metadata", {}))


def save_motion_clip(clip, path):
    data = {
        "fps": clip.fps,
        "skeleton": skeleton_to_dict(clip.skeleton)["joints"],
        "metadata": clip.skeleton.metadata,
        "frames": [
            {
                "root_t": list(map(float, f.root_t)),
                "root_q": list(map(float, f.root_q)),
                "joints": [list(map(float, q)) for q in f.joints],
            }
            for f in clip.frames
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_motion_clip(path):
    with open(path) as fh:
        data = json.load(fh)
    skel = skeleton_from_dict(
        {"joints": data["skeleton"], "metadata": data.get("metadata", {})}
    )
    frames = [
        MotionFrame(
            np.asarray(f["root_t"], dtype=float),
            quat_normalize(f["root_q"]),
            np.array([quat_normalize(q) for q in f["joints"]]),
        )
        for f in data["frames"]
    ]
    return MotionClip(float(data["fps"]), skel, frames)


def save_trajectory(traj, path):
    data = {
        "fps": traj.fps,
        "model": traj.model_name,
        "frames": [
            {
                "dof_pos": list(map(float, f.dof_pos)),
                "keypoints": [list(map(float, p)) for p in f.keypoints],
                "joint_pos": [list(map(float, p)) for p in f.joint_pos],
                "joint_vel": [list(map(float, v)) for v in f.joint_vel],
            }
            for f in traj.frames
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_trajectory(path):
    with open(path) as fh:
        data = json.load(fh)
    frames = [
        TrajectoryFrame(
            np.asarray(f["dof_pos"], dtype=float),
            np.asarray(f["keypoints"], dtype=float),
            np.asarray(f["joint_pos"], dtype=float),
            np.asarray(f["joint_vel"], dtype=float),
        )
        for f in data["frames"]
    ]
    return RobotTrajectory(float(data["fps"]), frames, data.get("model", "robot"))


def robot_model_to_dict(model):
    return {
        "name": model.name,
        "dofs": [
            {
                "name": d.name,
                "parent": d.parent,
                "axis": list(map(float, d.axis)),
                "offset": list(map(float, d.offset)),
                "limits": [float(d.limits[0]), float(d.limits[1])],
                "stiffness": d.stiffness,
                "damping": d.damping,
                "torque_limit": d.torque_limit,
                "group": d.group,
            }
            for d in model.dofs
        ],
        "keypoints": list(model.keypoints),
        "lower_indices": list(model.lower_indices),
        "upper_indices": list(model.upper_indices),
        "sites": [
            {"name": s.name, "parent": s.parent, "offset": list(map(float, s.offset))}
            for s in model.sites
        ],
    }


def robot_model_from_dict(data):
    dofs = tuple(
        Dof(
            name=d["name"],
            parent=int(d["parent"]),
            axis=np.asarray(d["axis"], dtype=float),
            offset=np.asarray(d["offset"], dtype=float),
            limits=(float(d["limits"][0]), float(d["limits"][1])),
            stiffness=float(d["stiffness"]),
            damping=float(d["damping"]),
            torque_limit=float(d["torque_limit"]),
            group=d["group"],
        )
        for d in data["dofs"]
    )
    sites = tuple(
        Site(s["name"], int(s["parent"]), np.asarray(s["offset"], dtype=float))
        for s in data.get("sites", [])
    )
    return RobotModel(
        dofs=dofs,
        keypoints=tuple(data["keypoints"]),
        lower_indices=tuple(data["lower_indices"]),
        upper_indices=tuple(data["upper_indices"]),
        sites=sites,
        name=data.get("name", "robot"),
    )


def save_robot_model(model, path):
    with open(path, "w") as fh:
        json.dump(robot_model_to_dict(model), fh, indent=1)


def load_robot_model(path):
    with open(path) as fh:
        return robot_model_from_dict(json.load(fh))


def default_robot_model():
    """Load the bundled H1X-55 model."""
    ref = resources.files("signmotion.data") / "h1x55.json"
    with ref.open() as fh:
        return robot_model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# H1X-55 construction (used to generate data/h1x55.json)
# ---------------------------------------------------------------------------

_X = (1.0, 0.0, 0.0)
_Y = (0.0, 1.0, 0.0)
_Z = (0.0, 0.0, 1.0)

# stiffness, damping, torque limit per joint family
_GAINS = {
    "hip": (200.0, 5.0, 170.0),
    "knee": (300.0, 6.0, 255.0),
    "ankle": (40.0, 2.0, 34.0),
    "torso": (200.0, 5.0, 170.0),
    "shoulder": (30.0, 2.0, 34.0),
    "elbow": (30.0, 2.0, 18.0),
    "hand": (30.0, 2.0, 18.0),
}


def build_h1x55():
    """Construct the default 55-DoF humanoid programmatically."""
    dofs = []
    index = {}

    def add(name, parent_name, axis, offset, limits, family, group):
        kp, kd, tau = _GAINS[family]
        parent = -1 if parent_name is None else index[parent_name]
        dofs.append(Dof(name, parent, np.array(axis, dtype=float),
                        np.array(offset, dtype=float), limits, kp, kd, tau, group))
        index[name] = len(dofs) - 1

    for side, sy in (("left", 1.0), ("right", -1.0)):
        add(f"{side}_hip_yaw", None, _Z, (0.0, sy * 0.1, -0.1), (-0.6, 0.6), "hip", "leg")
        add(f"{side}_hip_roll", f"{side}_hip_yaw", _X, (0.0, 0.0, 0.0), (-0.5, 0.5), "hip", "leg")
        add(f"{side}_hip_pitch", f"{side}_hip_roll", _Y, (0.0, 0.0, 0.0), (-1.8, 1.8), "hip", "leg")
        add(f"{side}_knee", f"{side}_hip_pitch", _Y, (0.0, 0.0, -0.4), (-0.1, 2.1), "knee", "leg")
        add(f"{side}_ankle", f"{side}_knee", _Y, (0.0, 0.0, -0.4), (-0.9, 0.6), "ankle", "leg")

    add("torso", None, _Z, (0.0, 0.0, 0.1), (-2.3, 2.3), "torso", "torso")

    for side, sy in (("left", 1.0), ("right", -1.0)):
        add(f"{side}_shoulder_pitch", "torso", _Y, (0.0, sy * 0.22, 0.45),
            (-2.9, 2.9), "shoulder", "shoulder")
        add(f"{side}_shoulder_roll", f"{side}_shoulder_pitch", _X, (0.0, 0.0, 0.0),
            (-2.2, 2.2), "shoulder", "shoulder")
        add(f"{side}_shoulder_yaw", f"{side}_shoulder_roll", _Z, (0.0, 0.0, 0.0),
            (-2.6, 2.6), "shoulder", "shoulder")
        add(f"{side}_elbow", f"{side}_shoulder_yaw", _Y, (0.0, 0.0, -0.28),
            (-1.25, 2.6), "elbow", "elbow")
        add(f"{side}_wrist_yaw", f"{side}_elbow", _Z, (0.0, 0.0, -0.25),
            (-2.0, 2.0), "hand", "wrist")
        add(f"{side}_wrist_pitch", f"{side}_wrist_yaw", _Y, (0.0, 0.0, 0.0),
            (-1.6, 1.6), "hand", "wrist")
        add(f"{side}_wrist_roll", f"{side}_wrist_pitch", _X, (0.0, 0.0, 0.0),
            (-1.6, 1.6), "hand", "wrist")

        # 15-DoF hand: thumb + 4 fingers, 3 flexion joints each.
        finger_specs = [
            ("thumb", (sy * 0.04, 0.0, -0.03), _Y),
            ("index", (0.03, 0.0, -0.09), _X),
            ("middle", (0.01, 0.0, -0.095), _X),
            ("ring", (-0.01, 0.0, -0.09), _X),
            ("pinky", (-0.03, 0.0, -0.085), _X),
        ]
        for fname, base, axis in finger_specs:
            segs = [(base, (-0.05, 1.6)), ((0.0, 0.0, -0.035), (-0.05, 1.7)),
                    ((0.0, 0.0, -0.025), (-0.05, 1.6))]
            parent = f"{side}_wrist_roll"
            for si, (off, lim) in enumerate(segs):
                jname = f"{side}_{fname}_{si}"
                add(jname, parent, axis, off, lim, "hand", "finger")
                parent = jname

    sites = []
    for side in ("left", "right"):
        for fname in ("thumb", "index", "middle", "ring", "pinky"):
            sites.append(Site(f"{side}_{fname}_tip", index[f"{side}_{fname}_2"],
                              np.array([0.0, 0.0, -0.02])))

    keypoint_names = []
    for side in ("left", "right"):
        keypoint_names += [
            f"{side}_hip_pitch", f"{side}_knee", f"{side}_ankle",
            f"{side}_shoulder_yaw", f"{side}_elbow", f"{side}_wrist_roll",
            f"{side}_middle_2",
        ]
    keypoints = tuple(index[n] for n in keypoint_names)

    lower = tuple(i for i, d in enumerate(dofs) if d.group == "leg")
    upper = tuple(i for i, d in enumerate(dofs) if d.group != "leg")
    return RobotModel(tuple(dofs), keypoints, lower, upper, tuple(sites), "h1x55")


# SMPL-X style joint name list (55 joints, pose theta in R^{55x3})
SMPLX_JOINT_NAMES = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "jaw", "left_eye_smplx", "right_eye_smplx",
    "left_index1", "left_index2", "left_index3",
    "left_middle1", "left_middle2", "left_middle3",
    "left_pinky1", "left_pinky2", "left_pinky3",
    "left_ring1", "left_ring2", "left_ring3",
    "left_thumb1", "left_thumb2", "left_thumb3",
    "right_index1", "right_index2", "right_index3",
    "right_middle1", "right_middle2", "right_middle3",
    "right_pinky1", "right_pinky2", "right_pinky3",
    "right_ring1", "right_ring2", "right_ring3",
    "right_thumb1", "right_thumb2", "right_thumb3",
]

_SMPLX_PARENTS = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
    15, 15, 15,
    20, 25, 26, 20, 28, 29, 20, 31, 32, 20, 34, 35, 20, 37, 38,
    21, 40, 41, 21, 43, 44, 21, 46, 47, 21, 49, 50, 21, 52, 53,
]


def default_source_skeleton():
    """An SMPL-X shaped 55-joint source skeleton with nominal limb offsets."""
    offsets = np.zeros((55, 3))
    nominal = {
        "left_hip": (0, 0.09, -0.08), "right_hip": (0, -0.09, -0.08),
        "left_knee": (0, 0, -0.38), "right_knee": (0, 0, -0.38),
        "left_ankle": (0, 0, -0.4), "right_ankle": (0, 0, -0.4),
        "left_foot": (0.13, 0, -0.06), "right_foot": (0.13, 0, -0.06),
        "spine1": (0, 0, 0.11), "spine2": (0, 0, 0.13), "spine3": (0, 0, 0.05),
        "neck": (0, 0, 0.21), "head": (0, 0, 0.07),
        "left_collar": (0, 0.07, 0.12), "right_collar": (0, -0.07, 0.12),
        "left_shoulder": (0, 0.1, 0.04), "right_shoulder": (0, -0.1, 0.04),
        "left_elbow": (0, 0.26, 0), "right_elbow": (0, -0.26, 0),
        "left_wrist": (0, 0.25, 0), "right_wrist": (0, -0.25, 0),
    }
    for i, name in enumerate(SMPLX_JOINT_NAMES):
        if name in nominal:
            offsets[i] = nominal[name]
        elif name.startswith(("left_", "right_")) and name[-1].isdigit():
            sy = 1.0 if name.startswith("left_") else -1.0
            offsets[i] = (0.0, sy * 0.035, 0.0)
    joints = tuple(
        (SMPLX_JOINT_NAMES[i], _SMPLX_PARENTS[i], offsets[i]) for i in range(55)
    )
    return SourceSkeleton(joints)
