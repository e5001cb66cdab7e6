"""Minimal unit-quaternion helpers (scalar-first, Hamilton convention).

Quaternions are numpy arrays [w, x, y, z] mapping body axes to world axes.
Kept dependency-free and allocation-light because they sit in the per-sample
hot loop of the dead-reckoning simulation.
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    return q / np.linalg.norm(q)


def multiply(q1, q2):
    """Hamilton product q1 * q2."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def from_rotvec(v):
    """Quaternion for a rotation vector (axis * angle)."""
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        # second-order small-angle expansion keeps this smooth through zero
        half = 0.5 * v
        return normalize(np.array([1.0, half[0], half[1], half[2]]))
    axis = v / angle
    s = np.sin(0.5 * angle)
    return np.array([np.cos(0.5 * angle), s * axis[0], s * axis[1], s * axis[2]])


def to_rotvec(q):
    """Rotation vector of a unit quaternion (inverse of from_rotvec)."""
    w = np.clip(q[0], -1.0, 1.0)
    vec = q[1:]
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return 2.0 * vec * np.sign(w if w != 0 else 1.0)
    angle = 2.0 * np.arctan2(norm, w)
    if angle > np.pi:
        angle -= 2.0 * np.pi
    return (angle / norm) * vec


def to_matrix(q):
    """3x3 rotation matrix (body -> world) of a unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotate(q, v):
    """Rotate vector v from body to world frame."""
    return to_matrix(q) @ v


def align_vectors(a, b):
    """Minimal rotation quaternion taking unit vector a onto unit vector b."""
    # halfway-vector form: q = (a.h, a x h) with h the bisector of a and b.
    # Stable for nearly antiparallel inputs, where 1 + a.b cancels.
    h = a + b
    norm_h = np.linalg.norm(h)
    if norm_h < 1e-9:
        # antiparallel: rotate pi about any axis orthogonal to a
        axis = np.cross(a, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, np.array([0.0, 1.0, 0.0]))
        axis /= np.linalg.norm(axis)
        return np.array([0.0, axis[0], axis[1], axis[2]])
    h = h / norm_h
    c = np.cross(a, h)
    return np.array([float(np.dot(a, h)), c[0], c[1], c[2]])
