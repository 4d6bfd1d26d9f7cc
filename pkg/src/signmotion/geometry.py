"""Quaternion and axis-angle math shared by every kinematics module.

Conventions:
    - Quaternions are numpy arrays [w, x, y, z], Hamilton product.
    - Storage-boundary canonicalization: w >= 0 (double cover removed).
    - Axis-angle is (unit axis, angle) with angle in [0, pi]; the sign is
      absorbed into the axis.
"""

from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

_EPS = 1e-12


def quat_normalize(q):
    """Normalize to unit length and canonicalize to w >= 0."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("cannot normalize a near-zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(a, b):
    """Hamilton product a * b (apply b first, then a)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_inverse(q):
    """Inverse; equals the conjugate for unit quaternions."""
    q = np.asarray(q, dtype=float)
    return quat_conjugate(q) / max(float(np.dot(q, q)), _EPS)


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    w, ux, uy, uz = float(q[0]), float(q[1]), float(q[2]), float(q[3])
    v = np.asarray(v, dtype=float)
    vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
    # Rodrigues form of q v q^-1 with the cross products expanded
    tx = uy * vz - uz * vy + w * vx
    ty = uz * vx - ux * vz + w * vy
    tz = ux * vy - uy * vx + w * vz
    return np.array([
        vx + 2.0 * (uy * tz - uz * ty),
        vy + 2.0 * (uz * tx - ux * tz),
        vz + 2.0 * (ux * ty - uy * tx),
    ])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _EPS:
        return IDENTITY_QUAT.copy()
    half = 0.5 * float(angle)
    q = np.empty(4)
    q[0] = np.cos(half)
    q[1:] = np.sin(half) * axis / n
    return q


def quat_to_axis_angle(q):
    """Return (unit axis, angle) with angle in [0, pi].

    The identity maps to axis [1, 0, 0] and angle 0 by convention.
    """
    q = quat_normalize(q)
    w = min(1.0, max(-1.0, float(q[0])))
    angle = 2.0 * np.arccos(w)
    s = np.linalg.norm(q[1:])
    if s < _EPS or angle < _EPS:
        return np.array([1.0, 0.0, 0.0]), 0.0
    axis = q[1:] / s
    if angle > np.pi:  # canonical range via the antipodal representative
        angle = 2.0 * np.pi - angle
        axis = -axis
    return axis, float(angle)


def quat_log_map(q):
    """Exponential coordinates beta * axis of a unit quaternion."""
    axis, angle = quat_to_axis_angle(q)
    return axis * angle


def quat_geodesic_angle(a, b):
    """Rotation angle between two unit quaternions, in [0, pi]."""
    d = abs(float(np.dot(np.asarray(a, dtype=float), np.asarray(b, dtype=float))))
    d = min(1.0, d)
    return 2.0 * np.arccos(d)


def quat_to_matrix(q):
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_rpy(roll, pitch, yaw):
    """ZYX (yaw-pitch-roll) Euler angles to quaternion."""
    qx = quat_from_axis_angle([1.0, 0.0, 0.0], roll)
    qy = quat_from_axis_angle([0.0, 1.0, 0.0], pitch)
    qz = quat_from_axis_angle([0.0, 0.0, 1.0], yaw)
    return quat_multiply(qz, quat_multiply(qy, qx))


def random_unit_quat(rng):
    """Uniform random rotation (Marsaglia / Gaussian normalization)."""
    q = rng.standard_normal(4)
    return quat_normalize(q)


def ensure_sign_continuity(quats):
    """Flip quaternion signs so consecutive frames have positive dot product.

    `quats` is an array of shape (T, 4); returns a copy with the first frame
    canonicalized to w >= 0 and each later frame on the same cover sheet as
    its predecessor.
    """
    quats = np.array(quats, dtype=float)
    if len(quats) == 0:
        return quats
    if quats[0, 0] < 0.0:
        quats[0] = -quats[0]
    for k in range(1, len(quats)):
        if float(np.dot(quats[k], quats[k - 1])) < 0.0:
            quats[k] = -quats[k]
    return quats
