"""Unit-quaternion algebra, scalar-first convention q = [w, x, y, z].

All functions accept arrays of shape (..., 4) and are written against the
:mod:`~emogest.numerics` dispatch layer, so they also accept autodiff
Tensors and contribute to the gradient graph when differentiated losses
need rotations.

Euler convention used everywhere in this package: intrinsic X-Y-Z, radians,
i.e. R = Rx(a) @ Ry(b) @ Rz(c).
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .numerics import value

DEGENERATE_NORM = 1e-8
# |sin(pitch)| above this means pitch is within ~1e-6 rad of +-pi/2
GIMBAL_SIN = 1.0 - 5e-13


def identity(leading_shape=()):
    q = np.zeros(tuple(leading_shape) + (4,))
    q[..., 0] = 1.0
    return q


def _comp(q, i):
    return q[..., i : i + 1]


def normalize_info(q):
    """Unit-normalize; degenerate inputs (norm < 1e-8) fall back to identity.

    Returns ``(unit_q, degenerate_mask)`` where the mask is a plain boolean
    array over the leading shape.  Non-finite input is a hard error.
    """
    qv = value(q)
    if not np.isfinite(qv).all():
        raise ValueError("quaternion has non-finite components")
    norm_sq = nm.sum_(q * q, axis=-1, keepdims=True)
    degenerate = value(norm_sq) < DEGENERATE_NORM**2
    safe = nm.where(degenerate, 1.0, nm.sqrt(nm.clip(norm_sq, DEGENERATE_NORM**2, None)))
    unit = nm.where(degenerate, identity(qv.shape[:-1]), q / safe)
    return unit, degenerate[..., 0]


def normalize(q):
    return normalize_info(q)[0]


def mul(a, b):
    """Hamilton product a (x) b."""
    aw, ax, ay, az = (_comp(a, i) for i in range(4))
    bw, bx, by, bz = (_comp(b, i) for i in range(4))
    return nm.concat(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def conjugate(q):
    w, x, y, z = (_comp(q, i) for i in range(4))
    return nm.concat([w, -x, -y, -z], axis=-1)


def rotate(q, v):
    """Rotate 3-vectors v (..., 3) by unit quaternions q (..., 4)."""
    zero = _comp(q, 0) * 0.0
    pure = nm.concat([zero, v[..., 0:1], v[..., 1:2], v[..., 2:3]], axis=-1)
    out = mul(mul(q, pure), conjugate(q))
    return out[..., 1:4]


def to_matrix(q):
    """Rotation matrices, shape (..., 3, 3); q must be unit-norm."""
    w, x, y, z = (_comp(q, i) for i in range(4))
    rows = nm.concat(
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
        axis=-1,
    )
    return nm.reshape(rows, value(q).shape[:-1] + (3, 3))


def from_matrix(m):
    """Unit quaternion from a single 3x3 rotation matrix (numpy only)."""
    m = np.asarray(m, dtype=float)
    t = m[0, 0] + m[1, 1] + m[2, 2]
    # pick the numerically largest branch
    if t >= m[0, 0] and t >= m[1, 1] and t >= m[2, 2]:
        s = 2.0 * np.sqrt(t + 1.0)
        return normalize(
            np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        )
    i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = 2.0 * np.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0))
    q = np.empty(4)
    q[0] = (m[k, j] - m[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (m[j, i] + m[i, j]) / s
    q[1 + k] = (m[k, i] + m[i, k]) / s
    return normalize(q)


def to_euler(q):
    """Intrinsic X-Y-Z angles (..., 3) in (-pi, pi].

    Within ~1e-6 rad of the pitch singularity the canonical branch is taken:
    the roll is absorbed into the yaw component and reported as zero.
    """
    w, x, y, z = (_comp(q, i) for i in range(4))
    m02 = 2.0 * (x * z + w * y)
    sin_pitch = nm.clip(m02, -1.0, 1.0)
    pitch = nm.arcsin(sin_pitch)

    gimbal = np.abs(value(sin_pitch)) >= GIMBAL_SIN
    # regular branch
    roll = nm.arctan2(2.0 * (w * x - y * z), 1.0 - 2.0 * (x * x + y * y))
    yaw = nm.arctan2(2.0 * (w * z - x * y), 1.0 - 2.0 * (y * y + z * z))
    # singular branch: m10/m11 carry roll+-yaw, reported entirely as yaw
    yaw_g = nm.arctan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z))
    roll = nm.where(gimbal, roll * 0.0, roll)
    yaw = nm.where(gimbal, yaw_g, yaw)
    return nm.concat([roll, pitch, yaw], axis=-1)


def from_euler(e):
    """Quaternion for intrinsic X-Y-Z angles e (..., 3)."""
    half = 0.5 * e
    ca, sa = nm.cos(half[..., 0:1]), nm.sin(half[..., 0:1])
    cb, sb = nm.cos(half[..., 1:2]), nm.sin(half[..., 1:2])
    cc, sc = nm.cos(half[..., 2:3]), nm.sin(half[..., 2:3])
    zero_a = ca * 0.0
    qx = nm.concat([ca, sa, zero_a, zero_a], axis=-1)
    qy = nm.concat([cb, zero_a, sb, zero_a], axis=-1)
    qz = nm.concat([cc, zero_a, zero_a, sc], axis=-1)
    return mul(mul(qx, qy), qz)


def hemisphere_align(q, ref):
    """Flip q where dot(q, ref) < 0; the represented rotation is unchanged."""
    dot = np.sum(value(q) * value(ref), axis=-1, keepdims=True)
    sign = np.where(dot >= 0.0, 1.0, -1.0)
    return q * sign


def geodesic(a, b):
    """Rotation angle between unit quaternions, sign-insensitive (numpy only)."""
    dot = np.abs(np.sum(value(a) * value(b), axis=-1))
    return 2.0 * np.arccos(np.clip(dot, 0.0, 1.0))
