"""Strapdown inertial mechanization in the local-level NED frame.

One cycle advances attitude, velocity and geodetic position over a single IMU
interval:

1. intermediate attitude over dt/2 (average attitude used to project the
   specific force into the navigation frame),
2. velocity rate = rotated specific force + gravity - (transport + 2 x Earth
   rate) x velocity, integrated explicitly,
3. altitude, latitude and longitude by trapezoidal integration, with the
   transverse radius refreshed at the updated latitude for the second
   longitude term,
4. final attitude from the gyro rate minus the body-resolved navigation-frame
   rotation recomputed at the updated position/velocity, followed by one
   symmetric re-orthonormalization step.

Frame-rate terms in steps 1-2 use the state at the start of the interval;
step 4 uses the updated state. ``na_cycle_batch`` propagates a stack of
states through one interval (shared dt, per-state measurements); the scalar
``na_cycle`` wraps a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .earth import (
    WGS84,
    EarthParams,
    GeodeticPosition,
    _check_pole,
    _earth_rate,
    _gravity_down,
    _radii,
    _transport_rate,
    wrap_longitude,
)
from .so3 import exp_so3, is_dcm

_EYE3 = np.eye(3)


@dataclass(frozen=True)
class ImuSample:
    """Specific force (m/s^2) and angular rate (rad/s), body frame, covering
    the interval (t - dt, t]. Rates are treated as constant over the interval."""

    t: float
    specific_force: np.ndarray
    angular_rate: np.ndarray
    dt: float

    def __post_init__(self):
        f = np.asarray(self.specific_force, dtype=float)
        w = np.asarray(self.angular_rate, dtype=float)
        if f.shape != (3,) or w.shape != (3,):
            raise ValueError("specific force and angular rate must be 3-vectors")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(w))):
            raise ValueError("IMU sample must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError("dt must be positive")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "specific_force", f)
        object.__setattr__(self, "angular_rate", w)
        object.__setattr__(self, "dt", float(self.dt))


@dataclass(frozen=True)
class NavSolution:
    """Full navigation state: geodetic position, NED velocity, body-to-nav DCM."""

    pos: GeodeticPosition
    vel_ned: np.ndarray
    attitude: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vel_ned, dtype=float)
        c = np.asarray(self.attitude, dtype=float)
        if v.shape != (3,):
            raise ValueError("velocity must be a 3-vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("velocity must be finite")
        if not is_dcm(c, tol=1e-6):
            raise ValueError("attitude is not a valid DCM")
        object.__setattr__(self, "vel_ned", v)
        object.__setattr__(self, "attitude", c)


def _orthonormalize(dcm):
    """One symmetric (Newton) orthonormalization step: C (3I - C^T C) / 2."""
    ctc = np.swapaxes(dcm, -1, -2) @ dcm
    return dcm @ (1.5 * _EYE3 - 0.5 * ctc)


def _cross(a, b):
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def na_cycle_batch(lat, lon, alt, vel, dcm, force, rate, dt, earth: EarthParams = WGS84):
    """One mechanization cycle for a batch of states over a shared interval.

    Args:
        lat, lon, alt: (B,) geodetic position per state.
        vel: (B, 3) NED velocity.
        dcm: (B, 3, 3) body-to-nav attitude.
        force, rate: (B, 3) or (3,) body-frame specific force / angular rate.
        dt: interval length, seconds.
        earth: Earth model parameters.

    Returns:
        (lat, lon, alt, vel, dcm) arrays for the end of the interval.
    """
    force = np.broadcast_to(np.asarray(force, dtype=float), vel.shape)
    rate = np.broadcast_to(np.asarray(rate, dtype=float), vel.shape)

    _check_pole(lat)
    r_n, r_e = _radii(lat, earth)
    w_ie = _earth_rate(lat, earth)
    w_en = _transport_rate(lat, alt, vel, earth)
    w_in = w_ie + w_en

    # Intermediate (average) attitude over the half interval.
    w_nb_star = rate - np.einsum("...ji,...j->...i", dcm, w_in)
    dcm_star = dcm @ exp_so3(w_nb_star * (dt / 2.0))

    v_dot = np.einsum("...ij,...j->...i", dcm_star, force) - _cross(w_en + 2.0 * w_ie, vel)
    v_dot[..., 2] += _gravity_down(lat, alt, earth)
    vel_new = vel + v_dot * dt

    alt_new = alt - (vel_new[..., 2] + vel[..., 2]) * (dt / 2.0)
    lat_new = lat + (
        vel[..., 0] / (r_n + alt) + vel_new[..., 0] / (r_n + alt_new)
    ) * (dt / 2.0)
    _check_pole(lat_new)
    _, r_e_new = _radii(lat_new, earth)
    lon_new = lon + (
        vel[..., 1] / ((r_e + alt) * np.cos(lat))
        + vel_new[..., 1] / ((r_e_new + alt_new) * np.cos(lat_new))
    ) * (dt / 2.0)
    lon_new = np.asarray(wrap_longitude(lon_new))

    # Final attitude with frame rates recomputed at the updated state; the
    # body resolution still uses the start-of-interval attitude.
    w_ie_new = _earth_rate(lat_new, earth)
    w_en_new = _transport_rate(lat_new, alt_new, vel_new, earth)
    w_nb = rate - np.einsum("...ji,...j->...i", dcm, w_ie_new + w_en_new)
    dcm_new = _orthonormalize(dcm @ exp_so3(w_nb * dt))

    return lat_new, lon_new, alt_new, vel_new, dcm_new


def na_cycle(solution: NavSolution, imu: ImuSample, earth: EarthParams = WGS84) -> NavSolution:
    """Advance a navigation solution through one IMU interval."""
    lat = np.array([solution.pos.latitude])
    lon = np.array([solution.pos.longitude])
    alt = np.array([solution.pos.altitude])
    vel = solution.vel_ned[None, :].copy()
    dcm = solution.attitude[None, :, :].copy()
    lat, lon, alt, vel, dcm = na_cycle_batch(
        lat, lon, alt, vel, dcm, imu.specific_force, imu.angular_rate, imu.dt, earth
    )
    return NavSolution(
        GeodeticPosition(float(lat[0]), float(lon[0]), float(alt[0])),
        vel[0],
        dcm[0],
    )
