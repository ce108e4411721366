"""Synthetic trajectory generation, inverse-mechanization IMU, and sensor
corruption.

Ground truth comes from fine-step RK4 integration of the position kinematics
under piecewise closed-form velocity/heading profiles. The "perfect" IMU is
recovered by inverting one mechanization cycle per sample, so running the
navigation algorithm over it reproduces the ground truth to integration
tolerance. The DVL stream is the body-frame ground-truth velocity on a 1 Hz
grid.

``corrupt`` draws per-run constant sensor biases, per-sample white noise,
initial velocity/misalignment offsets and optional DVL noise from one seeded
generator, in a fixed order, so identical seeds reproduce identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, sin, sqrt

import numpy as np

from .earth import (
    WGS84,
    EarthParams,
    GeodeticPosition,
    _earth_rate,
    _gravity_down,
    _transport_rate,
    wrap_longitude,
)
from .insdvl import DvlMeasurement
from .so3 import EulerAngles, _euler_to_dcm_arrays, exp_so3, log_so3
from .strapdown import ImuSample, NavSolution

_RK4_SUBSTEP = 2.5e-3  # s, fine-step target for ground-truth position integration


@dataclass(frozen=True)
class Segment:
    """Constant-rate maneuver piece: linear speed change, constant yaw rate,
    constant vertical speed (down-positive)."""

    duration: float
    accel: float = 0.0
    yaw_rate: float = 0.0
    vertical_speed: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError("segment duration must be positive")
        for name in ("accel", "yaw_rate", "vertical_speed"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"segment {name} must be finite")


@dataclass(frozen=True)
class TrajectorySpec:
    """Initial state plus a sequence of maneuver segments."""

    start: GeodeticPosition
    speed: float
    heading: float = 0.0
    segments: tuple = ()
    sample_rate: float = 100.0

    def __post_init__(self):
        if not (np.isfinite(self.speed) and self.speed >= 0.0):
            raise ValueError("initial speed must be non-negative")
        if not len(self.segments):
            raise ValueError("at least one segment is required")
        if self.sample_rate <= 0.0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "segments", tuple(self.segments))
        # Speed is piecewise linear; checking segment endpoints suffices.
        speed = self.speed
        for i, seg in enumerate(self.segments):
            speed += seg.accel * seg.duration
            if speed < -1e-12:
                raise ValueError(f"segment {i} drives the speed negative")

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)


@dataclass(frozen=True)
class GroundTruthRecord:
    """One ground-truth epoch."""

    t: float
    pos: GeodeticPosition
    vel_ned: np.ndarray
    attitude: EulerAngles


@dataclass(frozen=True)
class GroundTruth:
    """Ground-truth arrays over the whole run (strictly increasing time)."""

    times: np.ndarray
    latitude: np.ndarray
    longitude: np.ndarray
    altitude: np.ndarray
    velocity: np.ndarray
    euler: np.ndarray
    dcm: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("ground-truth times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.shape[0]

    def record(self, i: int) -> GroundTruthRecord:
        return GroundTruthRecord(
            t=float(self.times[i]),
            pos=GeodeticPosition(
                float(self.latitude[i]), float(self.longitude[i]), float(self.altitude[i])
            ),
            vel_ned=self.velocity[i].copy(),
            attitude=EulerAngles(*self.euler[i]),
        )

    def nav_solution(self, i: int) -> NavSolution:
        return NavSolution(
            GeodeticPosition(
                float(self.latitude[i]), float(self.longitude[i]), float(self.altitude[i])
            ),
            self.velocity[i].copy(),
            self.dcm[i].copy(),
        )


def _profile(spec: TrajectorySpec, t):
    """Speed, heading and vertical speed at time(s) t (piecewise closed form)."""
    t = np.asarray(t, dtype=float)
    bounds = np.cumsum([seg.duration for seg in spec.segments])
    starts = np.concatenate([[0.0], bounds[:-1]])
    speed0 = np.empty(len(spec.segments))
    yaw0 = np.empty(len(spec.segments))
    u, psi = spec.speed, spec.heading
    for i, seg in enumerate(spec.segments):
        speed0[i] = u
        yaw0[i] = psi
        u += seg.accel * seg.duration
        psi += seg.yaw_rate * seg.duration
    idx = np.minimum(np.searchsorted(bounds, t, side="right"), len(spec.segments) - 1)
    tau = t - starts[idx]
    accel = np.array([seg.accel for seg in spec.segments])[idx]
    yaw_rate = np.array([seg.yaw_rate for seg in spec.segments])[idx]
    v_down = np.array([seg.vertical_speed for seg in spec.segments])[idx]
    speed = speed0[idx] + accel * tau
    yaw = yaw0[idx] + yaw_rate * tau
    return speed, yaw, v_down


def _velocity_ned(spec: TrajectorySpec, t):
    speed, yaw, v_down = _profile(spec, t)
    return np.stack([speed * np.cos(yaw), speed * np.sin(yaw), v_down], axis=-1)


def simulate_trajectory(spec: TrajectorySpec, earth: EarthParams = WGS84):
    """Generate ground truth, a consistent perfect IMU, and a 1 Hz DVL.

    Returns (GroundTruth, list[ImuSample], list[DvlMeasurement]).
    """
    dt = 1.0 / spec.sample_rate
    n_samples = int(round(spec.duration * spec.sample_rate))
    times = np.arange(n_samples + 1) * dt

    velocity = _velocity_ned(spec, times)
    _, yaw, _ = _profile(spec, times)
    euler = np.stack([np.zeros_like(yaw), np.zeros_like(yaw), yaw], axis=-1)
    dcm = _euler_to_dcm_arrays(euler[:, 0], euler[:, 1], euler[:, 2])

    lat = np.empty(n_samples + 1)
    lon = np.empty(n_samples + 1)
    alt = np.empty(n_samples + 1)
    lat[0], lon[0], alt[0] = spec.start.latitude, spec.start.longitude, spec.start.altitude

    # RK4 on the position kinematics with the velocity profile evaluated once,
    # vectorized, on the fine grid (segment profiles are closed form).
    n_sub = max(1, int(round(dt / _RK4_SUBSTEP)))
    h = dt / n_sub
    node_times = np.arange(n_samples * n_sub + 1) * h
    v_node = _velocity_ned(spec, node_times)
    v_mid = _velocity_ned(spec, node_times[:-1] + 0.5 * h)
    node = [col.tolist() for col in v_node.T]
    mid = [col.tolist() for col in v_mid.T]

    semi_major = earth.semi_major_axis
    ecc_sq = earth.eccentricity_sq

    def deriv(lat_v, alt_v, v_n, v_e, v_d):
        den = 1.0 - ecc_sq * sin(lat_v) ** 2
        r_n = semi_major * (1.0 - ecc_sq) / (den * sqrt(den))
        r_e = semi_major / sqrt(den)
        return (
            v_n / (r_n + alt_v),
            v_e / ((r_e + alt_v) * cos(lat_v)),
            -v_d,
        )

    lat_f, lon_f, alt_f = lat[0], lon[0], alt[0]
    for k in range(n_samples):
        for j in range(n_sub):
            i = k * n_sub + j
            k1 = deriv(lat_f, alt_f, node[0][i], node[1][i], node[2][i])
            k2 = deriv(
                lat_f + 0.5 * h * k1[0], alt_f + 0.5 * h * k1[2],
                mid[0][i], mid[1][i], mid[2][i],
            )
            k3 = deriv(
                lat_f + 0.5 * h * k2[0], alt_f + 0.5 * h * k2[2],
                mid[0][i], mid[1][i], mid[2][i],
            )
            k4 = deriv(
                lat_f + h * k3[0], alt_f + h * k3[2],
                node[0][i + 1], node[1][i + 1], node[2][i + 1],
            )
            lat_f += (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            lon_f += (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            alt_f += (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        lat[k + 1], lon[k + 1], alt[k + 1] = lat_f, lon_f, alt_f
    lon[:] = wrap_longitude(lon)

    gt = GroundTruth(
        times=times,
        latitude=lat,
        longitude=lon,
        altitude=alt,
        velocity=velocity,
        euler=euler,
        dcm=dcm,
    )
    imu = inverse_mechanization(gt, earth)
    dvl = sample_dvl(gt)
    return gt, imu, dvl


def inverse_mechanization(gt: GroundTruth, earth: EarthParams = WGS84):
    """Recover the IMU stream that makes one mechanization cycle step from
    each ground-truth epoch to the next.

    The gyro rate comes from the relative attitude plus the body-resolved
    navigation-frame rotation at the updated state; the specific force
    inverts the velocity update through the half-interval attitude.
    """
    w_ie = _earth_rate(gt.latitude, earth)
    w_en = _transport_rate(gt.latitude, gt.altitude, gt.velocity, earth)
    w_in = w_ie + w_en
    g_down = np.broadcast_to(
        _gravity_down(gt.latitude, gt.altitude, earth), gt.latitude.shape
    )
    samples = []
    for k in range(len(gt) - 1):
        dt = float(gt.times[k + 1] - gt.times[k])
        c_k = gt.dcm[k]
        w_nb = log_so3(c_k.T @ gt.dcm[k + 1]) / dt
        rate = w_nb + c_k.T @ w_in[k + 1]

        w_nb_star = rate - c_k.T @ w_in[k]
        c_star = c_k @ exp_so3(w_nb_star * (dt / 2.0))
        v_dot = (gt.velocity[k + 1] - gt.velocity[k]) / dt
        f_nav = v_dot + np.cross(w_en[k] + 2.0 * w_ie[k], gt.velocity[k])
        f_nav[2] -= g_down[k]
        force = c_star.T @ f_nav
        samples.append(
            ImuSample(t=float(gt.times[k + 1]), specific_force=force, angular_rate=rate, dt=dt)
        )
    return samples


def sample_dvl(gt: GroundTruth):
    """Body-frame ground-truth velocity at integer seconds (t >= 1)."""
    measurements = []
    for k in range(len(gt)):
        t = float(gt.times[k])
        if t < 0.5 or abs(t - round(t)) > 1e-9:
            continue
        measurements.append(DvlMeasurement(t=round(t), vel_body=gt.dcm[k].T @ gt.velocity[k]))
    return measurements


@dataclass(frozen=True)
class CorruptionSpec:
    """Error-injection magnitudes (all standard deviations) and the RNG seed."""

    vel_std_horizontal: float = 0.25
    vel_std_vertical: float = 0.05
    misalign_std_deg: float = 0.01
    accel_noise_std: float = 0.03
    gyro_noise_std: float = 7.3e-6
    accel_bias_std: float = 0.3
    gyro_bias_std: float = 7.3e-5
    dvl_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in (
            "vel_std_horizontal",
            "vel_std_vertical",
            "misalign_std_deg",
            "accel_noise_std",
            "gyro_noise_std",
            "accel_bias_std",
            "gyro_bias_std",
            "dvl_noise_std",
        ):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class CorruptedRun:
    """Corrupted streams plus the drawn truth values needed for consistency
    evaluation (biases and initial offsets)."""

    initial_nav: NavSolution
    imu: list
    dvl: list
    accel_bias: np.ndarray
    gyro_bias: np.ndarray
    initial_velocity_error: np.ndarray
    initial_misalignment: np.ndarray
    seed: int


def corrupt(gt: GroundTruth, imu, dvl, spec: CorruptionSpec) -> CorruptedRun:
    """Inject seeded errors into perfect streams.

    Draw order is fixed: accel bias, gyro bias, initial velocity error,
    initial misalignment, per-sample accel noise, per-sample gyro noise,
    per-measurement DVL noise. Biases are constant over the run. The initial
    navigation solution is offset so that the truth equals the corrupted
    solution composed with the drawn errors.
    """
    rng = np.random.default_rng(spec.seed)
    accel_bias = rng.standard_normal(3) * spec.accel_bias_std
    gyro_bias = rng.standard_normal(3) * spec.gyro_bias_std
    vel_error = rng.standard_normal(3) * np.array(
        [spec.vel_std_horizontal, spec.vel_std_horizontal, spec.vel_std_vertical]
    )
    misalignment = rng.standard_normal(3) * np.deg2rad(spec.misalign_std_deg)
    accel_noise = rng.standard_normal((len(imu), 3)) * spec.accel_noise_std
    gyro_noise = rng.standard_normal((len(imu), 3)) * spec.gyro_noise_std
    dvl_noise = rng.standard_normal((len(dvl), 3)) * spec.dvl_noise_std

    initial_nav = NavSolution(
        GeodeticPosition(float(gt.latitude[0]), float(gt.longitude[0]), float(gt.altitude[0])),
        gt.velocity[0] - vel_error,
        exp_so3(-misalignment) @ gt.dcm[0],
    )
    noisy_imu = [
        ImuSample(
            t=s.t,
            specific_force=s.specific_force + accel_bias + accel_noise[k],
            angular_rate=s.angular_rate + gyro_bias + gyro_noise[k],
            dt=s.dt,
        )
        for k, s in enumerate(imu)
    ]
    noisy_dvl = [
        DvlMeasurement(t=m.t, vel_body=m.vel_body + dvl_noise[j]) for j, m in enumerate(dvl)
    ]
    return CorruptedRun(
        initial_nav=initial_nav,
        imu=noisy_imu,
        dvl=noisy_dvl,
        accel_bias=accel_bias,
        gyro_bias=gyro_bias,
        initial_velocity_error=vel_error,
        initial_misalignment=misalignment,
        seed=spec.seed,
    )
