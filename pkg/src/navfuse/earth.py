"""Earth model quantities for local-level (NED) inertial mechanization.

WGS84 curvature radii, Somigliana normal gravity with a free-air altitude
correction, Earth rotation rate and transport rate resolved in the navigation
frame. ``EarthParams.test_mode()`` zeroes the frame rates and pins gravity so
integration tests have closed-form truth.

All operations are pure functions over immutable parameters; concurrent use
is unrestricted. Latitude/altitude arguments accept scalars or numpy arrays
of matching shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WGS84_SEMI_MAJOR_AXIS = 6378137.0  # m
WGS84_ECCENTRICITY_SQ = 6.69437999014e-3
WGS84_ROTATION_RATE = 7.292115e-5  # rad/s
WGS84_FLATTENING = 1.0 / 298.257223563

# Somigliana normal-gravity closed form and the free-air series coefficient
# m = omega^2 a^2 b / GM.
GRAVITY_EQUATOR = 9.7803253359  # m/s^2
SOMIGLIANA_K = 1.931852652458e-3
GRAVITY_M_RATIO = 3.449786506841e-3

# tan(L) and 1/cos(L) are treated as singular closer to the poles than this.
_POLE_GUARD = 1e-8


def wrap_longitude(angle):
    """Wrap an angle in radians to (-pi, pi]."""
    wrapped = -((np.pi - np.asarray(angle, dtype=float)) % (2.0 * np.pi) - np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class GeodeticPosition:
    """Geodetic position: latitude/longitude in radians, altitude in meters
    (positive up). Longitude is wrapped to (-pi, pi] on construction."""

    latitude: float
    longitude: float
    altitude: float

    def __post_init__(self):
        lat = float(self.latitude)
        lon = float(self.longitude)
        alt = float(self.altitude)
        if not (np.isfinite(lat) and np.isfinite(lon) and np.isfinite(alt)):
            raise ValueError("position components must be finite")
        if abs(lat) > np.pi / 2:
            raise ValueError(f"latitude {lat} rad is outside +-pi/2")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", wrap_longitude(lon))
        object.__setattr__(self, "altitude", alt)


@dataclass(frozen=True)
class EarthParams:
    """Ellipsoid, rotation and gravity constants plus test-mode switches.

    When ``gravity_override`` is not None the gravity vector is pinned to
    ``[0, 0, gravity_override]`` (NED, down-positive). The rate flags zero the
    corresponding angular-rate vectors so attitude and velocity updates
    decouple from Earth rotation in unit tests.
    """

    semi_major_axis: float = WGS84_SEMI_MAJOR_AXIS
    eccentricity_sq: float = WGS84_ECCENTRICITY_SQ
    rotation_rate: float = WGS84_ROTATION_RATE
    flattening: float = WGS84_FLATTENING
    gravity_equator: float = GRAVITY_EQUATOR
    somigliana_k: float = SOMIGLIANA_K
    gravity_m_ratio: float = GRAVITY_M_RATIO
    earth_rate_enabled: bool = True
    transport_rate_enabled: bool = True
    gravity_override: float | None = None

    def __post_init__(self):
        if self.semi_major_axis <= 0.0:
            raise ValueError("semi-major axis must be positive")
        if not 0.0 <= self.eccentricity_sq < 1.0:
            raise ValueError("eccentricity squared must lie in [0, 1)")
        if self.rotation_rate < 0.0:
            raise ValueError("rotation rate must be non-negative")

    @classmethod
    def test_mode(cls, gravity: float = 0.0) -> "EarthParams":
        """Earth rate and transport rate off, gravity pinned to [0, 0, g]."""
        return cls(
            earth_rate_enabled=False,
            transport_rate_enabled=False,
            gravity_override=float(gravity),
        )


WGS84 = EarthParams()


def _radii(lat, earth: EarthParams):
    sin2 = np.sin(lat) ** 2
    denom = 1.0 - earth.eccentricity_sq * sin2
    r_n = earth.semi_major_axis * (1.0 - earth.eccentricity_sq) / denom**1.5
    r_e = earth.semi_major_axis / np.sqrt(denom)
    return r_n, r_e


def radii_of_curvature(latitude, earth: EarthParams = WGS84):
    """Meridian and transverse radii of curvature at a latitude.

    R_n = a (1 - e^2) / (1 - e^2 sin^2 L)^(3/2)
    R_e = a / (1 - e^2 sin^2 L)^(1/2)
    """
    lat = np.asarray(latitude, dtype=float)
    if not np.all(np.isfinite(lat)):
        raise ValueError("latitude must be finite")
    if np.any(np.abs(lat) > np.pi / 2 + 1e-12):
        raise ValueError("latitude outside +-pi/2")
    r_n, r_e = _radii(lat, earth)
    if np.ndim(lat) == 0:
        return float(r_n), float(r_e)
    return r_n, r_e


def _gravity_down(lat, alt, earth: EarthParams):
    if earth.gravity_override is not None:
        return np.broadcast_to(earth.gravity_override, np.shape(lat)).astype(float)
    sin2 = np.sin(lat) ** 2
    g0 = (
        earth.gravity_equator
        * (1.0 + earth.somigliana_k * sin2)
        / np.sqrt(1.0 - earth.eccentricity_sq * sin2)
    )
    a = earth.semi_major_axis
    f = earth.flattening
    m = earth.gravity_m_ratio
    # Free-air series in height above the ellipsoid.
    corr = (
        1.0
        - 2.0 / a * (1.0 + f + m - 2.0 * f * sin2) * alt
        + 3.0 * alt**2 / a**2
    )
    return g0 * corr


def gravity_ned(latitude, altitude, earth: EarthParams = WGS84):
    """Gravity vector [0, 0, g_d] in NED axes (down-positive)."""
    lat = np.asarray(latitude, dtype=float)
    alt = np.asarray(altitude, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(alt))):
        raise ValueError("latitude/altitude must be finite")
    g_d = _gravity_down(lat, alt, earth)
    zeros = np.zeros_like(g_d)
    return np.stack([zeros, zeros, g_d], axis=-1)


def _earth_rate(lat, earth: EarthParams):
    out = np.zeros(np.shape(lat) + (3,))
    if earth.earth_rate_enabled:
        omega = earth.rotation_rate
        out[..., 0] = omega * np.cos(lat)
        out[..., 2] = -omega * np.sin(lat)
    return out


def earth_rate_ned(latitude, earth: EarthParams = WGS84):
    """Earth rotation rate resolved in NED: Omega * [cos L, 0, -sin L]."""
    lat = np.asarray(latitude, dtype=float)
    if not np.all(np.isfinite(lat)):
        raise ValueError("latitude must be finite")
    return _earth_rate(lat, earth)


def _check_pole(lat):
    if np.any(np.pi / 2 - np.abs(lat) < _POLE_GUARD):
        raise ValueError("transport rate singular within 1e-8 rad of the poles")


def _transport_rate(lat, alt, vel, earth: EarthParams):
    vel = np.asarray(vel, dtype=float)
    out = np.zeros(np.broadcast_shapes(vel.shape, np.shape(lat) + (3,)))
    if not earth.transport_rate_enabled:
        return out
    _check_pole(lat)
    r_n, r_e = _radii(lat, earth)
    transverse = r_e + alt
    v_e = vel[..., 1]
    out[..., 0] = v_e / transverse
    out[..., 1] = -vel[..., 0] / (r_n + alt)
    out[..., 2] = -v_e * np.tan(lat) / transverse
    return out


def transport_rate(pos: GeodeticPosition, vel_ned, earth: EarthParams = WGS84):
    """Rotation rate of the navigation frame with respect to Earth, in NED.

    [v_e / (R_e + h), -v_n / (R_n + h), -v_e tan(L) / (R_e + h)]
    """
    vel = np.asarray(vel_ned, dtype=float)
    if vel.shape != (3,):
        raise ValueError("velocity must be a 3-vector")
    if not np.all(np.isfinite(vel)):
        raise ValueError("velocity must be finite")
    return _transport_rate(pos.latitude, pos.altitude, vel, earth)
