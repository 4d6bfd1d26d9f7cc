"""SMPL-X parameter archive to motion-clip JSON conversion.

The converter is a pure format bridge: per-joint axis-angle rotations become
unit quaternions, the root translation passes through, and a 55-joint
skeleton header is emitted.  No retargeting, filtering, or shape-aware limb
scaling happens here.
"""

from __future__ import annotations

import json
import os

import numpy as np

NUM_JOINTS = 55

JOINT_NAMES = [
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

PARENTS = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
    15, 15, 15,
    20, 25, 26, 20, 28, 29, 20, 31, 32, 20, 34, 35, 20, 37, 38,
    21, 40, 41, 21, 43, 44, 21, 46, 47, 21, 49, 50, 21, 52, 53,
]

# Nominal T-pose limb offsets in meters; public datasets rarely ship a joint
# template alongside the parameters, so these act as a generic stand-in and
# can be overridden via an "offsets" field in the archive.
_NOMINAL_OFFSETS = {
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

# Canonical field name -> aliases seen in public SMPL-X exports.
DEFAULT_FIELD_ALIASES = {
    "betas": ("betas", "beta", "shape"),
    "poses": ("poses", "theta", "fullpose", "full_pose", "pose"),
    "trans": ("trans", "transl", "translation", "p"),
    "fps": ("fps", "mocap_framerate", "framerate"),
}


class ArchiveError(ValueError):
    pass


def default_offsets():
    out = np.zeros((NUM_JOINTS, 3))
    for i, name in enumerate(JOINT_NAMES):
        if name in _NOMINAL_OFFSETS:
            out[i] = _NOMINAL_OFFSETS[name]
        elif name.startswith(("left_", "right_")) and name[-1].isdigit():
            sy = 1.0 if name.startswith("left_") else -1.0
            out[i] = (0.0, sy * 0.035, 0.0)
    return out


def axis_angle_to_quat(aa):
    """(..., 3) rotation vectors -> (..., 4) [w, x, y, z] unit quaternions."""
    aa = np.asarray(aa, dtype=float)
    angle = np.linalg.norm(aa, axis=-1)
    q = np.zeros(aa.shape[:-1] + (4,))
    q[..., 0] = np.cos(0.5 * angle)
    small = angle < 1e-12
    # sin(x/2)/x is smooth; fall back to the series limit 1/2 at zero
    scale = np.where(small, 0.5, np.sin(0.5 * angle) / np.where(small, 1.0,
                                                               angle))
    q[..., 1:] = aa * scale[..., None]
    return q


def quat_to_axis_angle(q):
    """Inverse map on the w >= 0 hemisphere; angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    v = np.linalg.norm(q[..., 1:], axis=-1)
    angle = 2.0 * np.arctan2(v, q[..., 0])
    small = v < 1e-12
    scale = np.where(small, 2.0, angle / np.where(small, 1.0, v))
    return q[..., 1:] * scale[..., None]


def _load_field_map(path):
    with open(path) as fh:
        m = json.load(fh)
    unknown = set(m) - set(DEFAULT_FIELD_ALIASES)
    if unknown:
        raise ArchiveError(f"field map has unknown keys: {sorted(unknown)}")
    return m


def read_archive(path, field_map=None):
    """Read an npz or JSON parameter archive into canonical arrays.

    Returns a dict with betas (B,), poses (T, 55, 3), trans (T, 3), fps.
    """
    if not os.path.exists(path):
        raise ArchiveError(f"archive not found: {path}")
    if path.endswith(".json"):
        with open(path) as fh:
            raw = {k: np.asarray(v) for k, v in json.load(fh).items()}
    else:
        with np.load(path) as data:
            raw = {k: data[k] for k in data.files}

    def pick(canonical):
        if field_map and canonical in field_map:
            name = field_map[canonical]
            if name not in raw:
                raise ArchiveError(
                    f"mapped field {name!r} for {canonical!r} not in archive")
            return raw[name]
        for alias in DEFAULT_FIELD_ALIASES[canonical]:
            if alias in raw:
                return raw[alias]
        raise ArchiveError(f"archive is missing the {canonical!r} field")

    poses = np.asarray(pick("poses"), dtype=float)
    if poses.ndim == 2 and poses.shape[1] == NUM_JOINTS * 3:
        poses = poses.reshape(-1, NUM_JOINTS, 3)
    if poses.ndim != 3 or poses.shape[1:] != (NUM_JOINTS, 3):
        raise ArchiveError(
            f"pose array must be (T, {NUM_JOINTS}, 3) or flattened, "
            f"got {poses.shape}")
    T = poses.shape[0]
    trans = np.asarray(pick("trans"), dtype=float)
    if trans.shape != (T, 3):
        raise ArchiveError(f"translation must be ({T}, 3), got {trans.shape}")
    fps = float(np.asarray(pick("fps")).reshape(()))
    if fps <= 0:
        raise ArchiveError("fps must be positive")
    out = {
        "betas": np.asarray(pick("betas"), dtype=float).ravel(),
        "poses": poses,
        "trans": trans,
        "fps": fps,
    }
    if "offsets" in raw:
        offs = np.asarray(raw["offsets"], dtype=float)
        if offs.shape != (NUM_JOINTS, 3):
            raise ArchiveError(f"offsets must be ({NUM_JOINTS}, 3)")
        out["offsets"] = offs
    return out


def archive_to_clip_dict(arch, fps=None):
    """Build the motion-clip JSON structure from canonical archive arrays."""
    offsets = arch.get("offsets")
    if offsets is None:
        offsets = default_offsets()
    quats = axis_angle_to_quat(arch["poses"])  # (T, 55, 4), joint 0 = root
    frames = []
    for t in range(quats.shape[0]):
        joints = quats[t].copy()
        root_q = joints[0].copy()
        joints[0] = (1.0, 0.0, 0.0, 0.0)  # root rotation lives in root_q
        frames.append({
            "root_t": [float(x) for x in arch["trans"][t]],
            "root_q": [float(x) for x in root_q],
            "joints": [[float(x) for x in q] for q in joints],
        })
    return {
        "fps": float(fps if fps is not None else arch["fps"]),
        "skeleton": [
            {"name": JOINT_NAMES[i], "parent": PARENTS[i],
             "offset": [float(x) for x in offsets[i]]}
            for i in range(NUM_JOINTS)
        ],
        "metadata": {"betas": [float(b) for b in arch["betas"]]},
        "frames": frames,
    }


def convert(archive_path, output_path, fps=None, field_map_path=None):
    field_map = _load_field_map(field_map_path) if field_map_path else None
    arch = read_archive(archive_path, field_map)
    clip = archive_to_clip_dict(arch, fps=fps)
    with open(output_path, "w") as fh:
        json.dump(clip, fh)
    return clip
