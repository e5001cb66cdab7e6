"""Quaternion utility properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanoloc import quat

unit_floats = st.floats(-1.0, 1.0)
angles = st.floats(-3.0, 3.0)


def vec3(draw_x, draw_y, draw_z):
    return np.array([draw_x, draw_y, draw_z])


@given(unit_floats, unit_floats, unit_floats, angles)
@settings(max_examples=100)
def test_rotvec_roundtrip(x, y, z, angle):
    axis = np.array([x, y, z])
    norm = np.linalg.norm(axis)
    if norm < 1e-6 or abs(angle) < 1e-8 or abs(angle) > np.pi - 1e-3:
        return
    rv = axis / norm * angle
    back = quat.to_rotvec(quat.from_rotvec(rv))
    assert np.allclose(back, rv, atol=1e-9)


@given(unit_floats, unit_floats, unit_floats, unit_floats,
       unit_floats, unit_floats, unit_floats)
@settings(max_examples=100)
def test_rotate_matches_matrix(qw, qx, qy, qz, vx, vy, vz):
    q = np.array([qw, qx, qy, qz])
    if np.linalg.norm(q) < 1e-3:
        return
    q = quat.normalize(q)
    v = np.array([vx, vy, vz])
    assert np.allclose(quat.rotate(q, v), quat.to_matrix(q) @ v, atol=1e-10)


@given(unit_floats, unit_floats, unit_floats, unit_floats)
@settings(max_examples=100)
def test_multiply_preserves_norm(qw, qx, qy, qz):
    q = np.array([qw, qx, qy, qz])
    if np.linalg.norm(q) < 1e-3:
        return
    q = quat.normalize(q)
    prod = quat.multiply(q, quat.conjugate(q))
    assert np.allclose(prod, [1.0, 0.0, 0.0, 0.0], atol=1e-10)


@given(unit_floats, unit_floats, unit_floats, unit_floats, unit_floats, unit_floats)
@settings(max_examples=200)
def test_align_vectors_maps_a_to_b(ax, ay, az, bx, by, bz):
    a = np.array([ax, ay, az])
    b = np.array([bx, by, bz])
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    q = quat.align_vectors(a, b)
    assert np.allclose(quat.rotate(q, a), b, atol=1e-9)


def test_align_vectors_identity_and_antiparallel():
    e = np.array([1.0, 0.0, 0.0])
    assert np.allclose(quat.align_vectors(e, e), [1, 0, 0, 0])
    q = quat.align_vectors(e, -e)
    assert np.allclose(quat.rotate(q, e), -e, atol=1e-12)


def test_align_vectors_is_minimal_rotation():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    rv = quat.to_rotvec(quat.align_vectors(a, b))
    # rotation axis must be perpendicular to both endpoints, angle = 90 deg
    assert np.isclose(np.linalg.norm(rv), np.pi / 2)
    assert np.allclose(rv / np.linalg.norm(rv), [0, 0, 1])
