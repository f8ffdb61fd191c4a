"""Vectorized quaternion helpers. Quaternions are (x, y, z, w) along the last axis."""

import numpy as np

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def multiply(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ax, ay, az, aw = np.moveaxis(a, -1, 0)
    bx, by, bz, bw = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ], axis=-1)


def conjugate(q) -> np.ndarray:
    q = np.array(q, dtype=float)
    q[..., :3] *= -1.0
    return q


def rotate(q, v) -> np.ndarray:
    """Rotate vectors ``v`` (..., 3) by unit quaternions ``q`` (..., 4)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., :3]
    w = q[..., 3:4]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def about_y(angle) -> np.ndarray:
    """Rotation by ``angle`` radians about +Y."""
    half = 0.5 * np.asarray(angle, dtype=float)
    z = np.zeros_like(half)
    return np.stack([z, np.sin(half), z, np.cos(half)], axis=-1)


def from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([axis * np.sin(half), np.cos(half)], axis=-1)


def from_euler_yxz(yaw, pitch, roll) -> np.ndarray:
    """Intrinsic yaw (about +Y), then pitch (about +X), then roll (about -Z)."""
    qy = from_axis_angle([0.0, 1.0, 0.0], yaw)
    qx = from_axis_angle([1.0, 0.0, 0.0], pitch)
    qz = from_axis_angle([0.0, 0.0, -1.0], roll)
    return multiply(multiply(qy, qx), qz)


def canonical_sign(q) -> np.ndarray:
    """Pick the representative with w >= 0 (ties broken on the first nonzero component)."""
    q = np.array(q, dtype=float)
    flat = q.reshape(-1, 4)
    # first component (scanning w, x, y, z) that is nonzero decides the sign
    order = flat[:, [3, 0, 1, 2]]
    nz = order != 0
    first = np.where(nz.any(axis=1), nz.argmax(axis=1), 0)
    sign = np.where(order[np.arange(len(flat)), first] < 0, -1.0, 1.0)
    return (flat * sign[:, None]).reshape(q.shape)


def angle_between(a, b) -> np.ndarray:
    """Rotation angle (radians) taking ``a`` to ``b``, sign-agnostic."""
    d = np.abs(np.sum(np.asarray(a) * np.asarray(b), axis=-1))
    return 2.0 * np.arccos(np.clip(d, -1.0, 1.0))
