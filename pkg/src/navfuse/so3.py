"""Rotation algebra on SO(3).

Skew operator, Rodrigues exponential/logarithm maps, intrinsic ZYX
(yaw-pitch-roll) Euler conversions, and multiplicative attitude increments.

Direction cosine matrices map body-frame vectors into the navigation frame
unless stated otherwise. Attitude increments compose on the left, i.e. as a
navigation-frame perturbation: ``attitude_plus(C, d) = exp_so3(d) @ C``.
``skew`` and ``exp_so3`` broadcast over leading axes; the remaining functions
are scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation angle the exponential/log maps switch to Taylor
# branches to avoid 0/0.
SMALL_ANGLE = 1e-8

_DCM_TOL = 1e-9


class GimbalLockError(ValueError):
    """Pitch too close to +-pi/2 for a unique Euler decomposition."""


class NearPiRotationError(ValueError):
    """Rotation angle too close to pi for a unique logarithm."""


def skew(vec):
    """Skew-symmetric (cross-product) matrix of a 3-vector: M @ w = vec x w."""
    v = np.asarray(vec, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _vee(mat):
    """Inverse of ``skew`` for (...,3,3) matrices (uses strict components)."""
    m = np.asarray(mat, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def exp_so3(rotvec):
    """Rodrigues map of a rotation vector (axis * angle, rad) to a DCM.

    Uses the second-order Taylor branch I + S + S^2/2 below 1e-8 rad.
    """
    v = np.asarray(rotvec, dtype=float)
    s = skew(v)
    s2 = s @ s
    angle = np.linalg.norm(v, axis=-1)[..., None, None]
    small = angle < SMALL_ANGLE
    safe = np.where(small, 1.0, angle)
    k1 = np.where(small, 1.0, np.sin(safe) / safe)
    k2 = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + k1 * s + k2 * s2


def log_so3(dcm):
    """Rotation vector of a DCM; inverse of ``exp_so3`` for angles < pi.

    Raises NearPiRotationError within 1e-6 rad of pi, where the axis is not
    determined by the antisymmetric part.
    """
    c = np.asarray(dcm, dtype=float)
    cos_angle = np.clip((np.trace(c) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle > np.pi - 1e-6:
        raise NearPiRotationError(f"rotation angle {angle} rad too close to pi")
    half_diff = _vee(c - c.T) / 2.0
    if angle < 1e-5:
        # theta/sin(theta) expansion; error O(theta^4).
        factor = 1.0 + angle**2 / 6.0 + 7.0 * angle**4 / 360.0
    else:
        factor = angle / np.sin(angle)
    return factor * half_diff


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic ZYX attitude: roll about x, pitch about y, yaw about z (rad)."""

    roll: float
    pitch: float
    yaw: float

    def __post_init__(self):
        r, p, y = float(self.roll), float(self.pitch), float(self.yaw)
        if not (np.isfinite(r) and np.isfinite(p) and np.isfinite(y)):
            raise ValueError("Euler angles must be finite")
        if abs(p) > np.pi / 2:
            raise ValueError(f"pitch {p} rad is outside +-pi/2")
        object.__setattr__(self, "roll", r)
        object.__setattr__(self, "pitch", p)
        object.__setattr__(self, "yaw", y)

    def as_array(self):
        return np.array([self.roll, self.pitch, self.yaw])


def _euler_to_dcm_arrays(roll, pitch, yaw):
    """Vectorized body-to-navigation DCM from ZYX Euler angles."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rows = [
        np.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], axis=-1),
        np.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], axis=-1),
        np.stack([-sp, cp * sr, cp * cr], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def _dcm_to_euler_arrays(dcm):
    """Vectorized inverse of ``_euler_to_dcm_arrays``.

    Returns (roll, pitch, yaw, gimbal_mask); angles are unreliable where the
    mask is set (|pitch| within ~1e-6 rad of pi/2).
    """
    c = np.asarray(dcm, dtype=float)
    sin_pitch = np.clip(-c[..., 2, 0], -1.0, 1.0)
    pitch = np.arcsin(sin_pitch)
    gimbal = np.pi / 2 - np.abs(pitch) < 1e-6
    roll = np.arctan2(c[..., 2, 1], c[..., 2, 2])
    yaw = np.arctan2(c[..., 1, 0], c[..., 0, 0])
    return roll, pitch, yaw, gimbal


def euler_to_dcm(angles: EulerAngles):
    """Body-to-navigation DCM for intrinsic ZYX angles: Rz(yaw) Ry(pitch) Rx(roll)."""
    return _euler_to_dcm_arrays(angles.roll, angles.pitch, angles.yaw)


def dcm_to_euler(dcm) -> EulerAngles:
    """ZYX Euler angles of a body-to-navigation DCM.

    Raises GimbalLockError when |pitch| is within 1e-6 rad of pi/2.
    """
    roll, pitch, yaw, gimbal = _dcm_to_euler_arrays(dcm)
    if gimbal:
        raise GimbalLockError("pitch within 1e-6 rad of +-pi/2")
    return EulerAngles(float(roll), float(pitch), float(yaw))


def attitude_plus(dcm, rotvec):
    """Apply a navigation-frame misalignment increment: exp_so3(d) @ C."""
    return exp_so3(rotvec) @ np.asarray(dcm, dtype=float)


def attitude_minus(dcm1, dcm2):
    """Misalignment increment d with attitude_plus(dcm2, d) == dcm1.

    Computed as log_so3(C1 @ C2^T); raises NearPiRotationError for relative
    rotations within 1e-6 rad of pi.
    """
    c1 = np.asarray(dcm1, dtype=float)
    c2 = np.asarray(dcm2, dtype=float)
    return log_so3(c1 @ c2.T)


def is_dcm(mat, tol: float = _DCM_TOL) -> bool:
    """True when mat is orthonormal with determinant +1 within tol."""
    c = np.asarray(mat, dtype=float)
    if c.shape != (3, 3) or not np.all(np.isfinite(c)):
        return False
    ortho = np.abs(c.T @ c - np.eye(3)).max() <= tol
    return bool(ortho and abs(np.linalg.det(c) - 1.0) <= tol)
