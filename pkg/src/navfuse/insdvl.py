"""INS/DVL error-state unscented Kalman filter.

The 12-dimensional error state is [velocity error, misalignment, accel bias,
gyro bias]; velocity error and misalignment are navigation-frame quantities,
biases are body-frame. The convention throughout is

    truth = nav (+) error,

i.e. an error-state hypothesis e maps the filter's navigation solution to a
candidate true solution: velocity nav.v + e.dv, attitude exp(e.dpsi) @ nav.C,
position pinned to the mean (velocity-only aiding leaves position
unobservable, so it carries no error state).

Two time-update propagators share one interface:

* ``propagate_sigma_nespm`` composes each sigma point onto the mean solution,
  runs the full strapdown mechanization over every IMU sample of the window
  with that point's own bias-compensated measurements, and differences each
  propagated solution against the propagated central point. The central point
  therefore maps to an exactly zero velocity/misalignment error, and bias
  blocks pass through unchanged.
* ``propagate_sigma_linearized`` applies a first-order transition matrix
  accumulated along the mean trajectory; it agrees with the nonlinear
  propagator to first order in the error magnitude.

The measurement is the INS-minus-DVL velocity residual in the navigation
frame. Under the truth = nav (+) error convention an error hypothesis e
predicts that residual as -e.dv, and closed-loop corrections fold the
estimated error back into the solution by composition, after which the
velocity/misalignment blocks of the mean are reset to zero (bias estimates
stay in the mean).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .earth import WGS84, EarthParams, GeodeticPosition, _earth_rate, _radii, _transport_rate
from .so3 import attitude_plus, exp_so3, log_so3, skew
from .strapdown import ImuSample, NavSolution, na_cycle_batch
from .ukf import (
    Gaussian,
    UtWeights,
    compute_weights,
    generate_sigma_points,
    measurement_update,
    regenerate_sigma_points,
    repair_covariance,
    unscented_transform,
)

STATE_DIM = 12
DV = slice(0, 3)
DPSI = slice(3, 6)
BA = slice(6, 9)
BG = slice(9, 12)


class FilterDivergence(RuntimeError):
    """Covariance trace exceeded the configured bound or went non-finite."""


@dataclass(frozen=True)
class ErrorState:
    """Structured view of the 12-state error vector."""

    velocity_error: np.ndarray
    misalignment: np.ndarray
    accel_bias: np.ndarray
    gyro_bias: np.ndarray

    def __post_init__(self):
        for name in ("velocity_error", "misalignment", "accel_bias", "gyro_bias"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        if np.linalg.norm(self.misalignment) >= np.pi:
            raise ValueError("misalignment must have norm < pi")

    @classmethod
    def zero(cls) -> "ErrorState":
        z = np.zeros(3)
        return cls(z, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_vector(cls, vec) -> "ErrorState":
        v = np.asarray(vec, dtype=float)
        if v.shape != (STATE_DIM,):
            raise ValueError(f"error state must have {STATE_DIM} elements")
        return cls(v[DV], v[DPSI], v[BA], v[BG])

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.velocity_error, self.misalignment, self.accel_bias, self.gyro_bias]
        )


@dataclass(frozen=True)
class SigmaSolution:
    """Full navigation solution representing one sigma point, with the
    point's biases carried alongside (biases stay constant under
    propagation; they only compensate the IMU)."""

    nav: NavSolution
    accel_bias: np.ndarray
    gyro_bias: np.ndarray


@dataclass(frozen=True)
class DvlMeasurement:
    """Body-frame velocity over ground from the DVL, on the 1 Hz grid."""

    t: float
    vel_body: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vel_body, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError("DVL velocity must be a finite 3-vector")
        if not np.isfinite(self.t):
            raise ValueError("timestamp must be finite")
        if abs(self.t - round(self.t)) > 1e-3:
            raise ValueError(f"DVL timestamp {self.t} not on the 1 Hz grid")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "vel_body", v)


def _check_noise_matrix(mat, name, dim, positive_definite):
    m = np.asarray(mat, dtype=float)
    if m.shape != (dim, dim):
        raise ValueError(f"{name} must be {dim}x{dim}")
    if np.abs(m - m.T).max() > 1e-9 * max(1.0, np.abs(m).max()):
        raise ValueError(f"{name} must be symmetric")
    min_eig = float(np.linalg.eigvalsh(m).min())
    if positive_definite and min_eig <= 0.0:
        raise ValueError(f"{name} must be positive definite (min eig {min_eig:.3e})")
    if not positive_definite and min_eig < -1e-12 * max(1.0, np.abs(m).max()):
        raise ValueError(f"{name} must be positive semidefinite (min eig {min_eig:.3e})")
    return m


@dataclass(frozen=True)
class FilterConfig:
    """UT parameters, noise matrices and behavioral switches for the filter."""

    process_noise: np.ndarray
    measurement_noise: np.ndarray
    initial_covariance: np.ndarray
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    closed_loop: bool = True
    per_sample_time_update: bool = False
    printed_center_weight: bool = False
    divergence_trace_bound: float = 1e4

    def __post_init__(self):
        object.__setattr__(
            self,
            "process_noise",
            _check_noise_matrix(self.process_noise, "process noise", STATE_DIM, False),
        )
        object.__setattr__(
            self,
            "measurement_noise",
            _check_noise_matrix(self.measurement_noise, "measurement noise", 3, True),
        )
        object.__setattr__(
            self,
            "initial_covariance",
            _check_noise_matrix(self.initial_covariance, "initial covariance", STATE_DIM, True),
        )


class ConstantProcessNoise:
    """Process-noise provider returning a fixed matrix each epoch.

    Any zero-argument callable returning a 12x12 PSD matrix can stand in for
    this, which is the hook for adaptive noise schemes.
    """

    def __init__(self, q):
        self._q = _check_noise_matrix(q, "process noise", STATE_DIM, False)

    def __call__(self) -> np.ndarray:
        return self._q


def _as_error_vector(err) -> np.ndarray:
    if isinstance(err, ErrorState):
        return err.as_vector()
    v = np.asarray(err, dtype=float)
    if v.shape != (STATE_DIM,):
        raise ValueError(f"error state must have {STATE_DIM} elements")
    return v


def build_sigma_solution(mean: NavSolution, err) -> SigmaSolution:
    """Compose an error state onto the mean solution.

    Position is copied unchanged, the velocity error is added, the
    misalignment is applied as a navigation-frame increment, and the bias
    blocks are carried over.
    """
    vec = _as_error_vector(err)
    nav = NavSolution(
        mean.pos,
        mean.vel_ned + vec[DV],
        attitude_plus(mean.attitude, vec[DPSI]),
    )
    return SigmaSolution(nav=nav, accel_bias=vec[BA].copy(), gyro_bias=vec[BG].copy())


def compensate_imu(imu: ImuSample, accel_bias, gyro_bias) -> ImuSample:
    """Subtract estimated sensor biases from a raw IMU sample."""
    return ImuSample(
        t=imu.t,
        specific_force=imu.specific_force - np.asarray(accel_bias, dtype=float),
        angular_rate=imu.angular_rate - np.asarray(gyro_bias, dtype=float),
        dt=imu.dt,
    )


@dataclass(frozen=True)
class MeanTrajectory:
    """Central-point states across one propagation window.

    Row k of the state arrays is the state after k samples (row 0 is the
    window start); ``compensated_force`` has one row per sample, the mean
    specific force after bias compensation.
    """

    times: np.ndarray
    latitude: np.ndarray
    longitude: np.ndarray
    altitude: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    compensated_force: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class PropagationResult:
    nav: NavSolution
    error_states: np.ndarray
    trajectory: MeanTrajectory


def propagate_sigma_nespm(
    mean: NavSolution,
    error_states,
    imu_window: Sequence[ImuSample],
    earth: EarthParams = WGS84,
) -> PropagationResult:
    """Propagate error-state sigma points through the navigation algorithm.

    Each row of ``error_states`` is composed onto ``mean`` and run through
    the full mechanization over every sample of the window, with the IMU
    compensated by that row's own biases. Propagated errors are recovered by
    differencing each solution against the propagated row 0 (the central
    point), so row 0 always maps to an exactly zero velocity/misalignment
    error and bias blocks are returned unchanged.
    """
    rows = np.atleast_2d(np.asarray(error_states, dtype=float))
    if rows.shape[1] != STATE_DIM:
        raise ValueError(f"error states must have {STATE_DIM} columns")
    if len(imu_window) == 0:
        raise ValueError("IMU window must not be empty")
    n_pts = rows.shape[0]

    lat = np.full(n_pts, mean.pos.latitude)
    lon = np.full(n_pts, mean.pos.longitude)
    alt = np.full(n_pts, mean.pos.altitude)
    vel = mean.vel_ned + rows[:, DV]
    dcm = exp_so3(rows[:, DPSI]) @ mean.attitude
    accel_bias = rows[:, BA]
    gyro_bias = rows[:, BG]

    n_samples = len(imu_window)
    times = np.empty(n_samples + 1)
    traj_lat = np.empty(n_samples + 1)
    traj_lon = np.empty(n_samples + 1)
    traj_alt = np.empty(n_samples + 1)
    traj_vel = np.empty((n_samples + 1, 3))
    traj_att = np.empty((n_samples + 1, 3, 3))
    comp_force = np.empty((n_samples, 3))
    times[0] = imu_window[0].t - imu_window[0].dt
    traj_lat[0], traj_lon[0], traj_alt[0] = lat[0], lon[0], alt[0]
    traj_vel[0] = vel[0]
    traj_att[0] = dcm[0]

    for k, sample in enumerate(imu_window):
        force = sample.specific_force - accel_bias
        rate = sample.angular_rate - gyro_bias
        try:
            lat, lon, alt, vel, dcm = na_cycle_batch(
                lat, lon, alt, vel, dcm, force, rate, sample.dt, earth
            )
        except ValueError as exc:
            raise ValueError(f"sigma propagation failed at sample {k}: {exc}") from exc
        times[k + 1] = sample.t
        traj_lat[k + 1], traj_lon[k + 1], traj_alt[k + 1] = lat[0], lon[0], alt[0]
        traj_vel[k + 1] = vel[0]
        traj_att[k + 1] = dcm[0]
        comp_force[k] = force[0]

    out = rows.copy()
    out[:, DV] = vel - vel[0]
    central_att_t = dcm[0].T
    for i in range(n_pts):
        try:
            out[i, DPSI] = log_so3(dcm[i] @ central_att_t)
        except ValueError as exc:
            raise ValueError(f"sigma {i}: {exc}") from exc

    nav = NavSolution(
        GeodeticPosition(float(lat[0]), float(lon[0]), float(alt[0])), vel[0], dcm[0]
    )
    trajectory = MeanTrajectory(
        times=times,
        latitude=traj_lat,
        longitude=traj_lon,
        altitude=traj_alt,
        velocity=traj_vel,
        attitude=traj_att,
        compensated_force=comp_force,
    )
    return PropagationResult(nav=nav, error_states=out, trajectory=trajectory)


def transport_rate_velocity_jacobian(lat, alt, earth: EarthParams = WGS84):
    """d(transport rate)/d(velocity) at fixed position; zero when disabled."""
    if not earth.transport_rate_enabled:
        return np.zeros((3, 3))
    r_n, r_e = _radii(lat, earth)
    jac = np.zeros((3, 3))
    jac[0, 1] = 1.0 / (r_e + alt)
    jac[1, 0] = -1.0 / (r_n + alt)
    jac[2, 1] = -np.tan(lat) / (r_e + alt)
    return jac


def error_transition_matrix(
    lat, alt, vel, attitude, compensated_force, earth: EarthParams = WGS84
):
    """Continuous-time error dynamics F under the truth = nav (+) error
    convention with position pinned to the mean:

        dv_dot   = -[C f*]x dpsi - C b_a - (w_en + 2 w_ie) x dv + [v]x N dv
        dpsi_dot = -N dv - (w_ie + w_en) x dpsi - C b_g
        b_dot    = 0

    where C is the mean attitude, f* the bias-compensated specific force and
    N the transport-rate velocity Jacobian.
    """
    w_ie = _earth_rate(np.asarray(lat, dtype=float), earth)
    w_en = _transport_rate(np.asarray(lat, dtype=float), alt, vel, earth)
    n_jac = transport_rate_velocity_jacobian(lat, alt, earth)
    rotated_force = attitude @ compensated_force
    f = np.zeros((STATE_DIM, STATE_DIM))
    f[DV, DV] = -skew(w_en + 2.0 * w_ie) + skew(vel) @ n_jac
    f[DV, DPSI] = -skew(rotated_force)
    f[DV, BA] = -attitude
    f[DPSI, DV] = -n_jac
    f[DPSI, DPSI] = -skew(w_ie + w_en)
    f[DPSI, BG] = -attitude
    return f


def propagate_sigma_linearized(
    error_states,
    mean_trajectory: MeanTrajectory,
    imu_window: Sequence[ImuSample],
    earth: EarthParams = WGS84,
) -> np.ndarray:
    """First-order propagation of error states along the mean trajectory.

    Accumulates the discrete transition I + F dt per IMU sample and applies
    it to each row relative to row 0 (the central point), mirroring the
    nonlinear propagator to first order. Bias blocks pass through unchanged
    and the map is exactly linear in (row - row0).
    """
    rows = np.atleast_2d(np.asarray(error_states, dtype=float))
    if rows.shape[1] != STATE_DIM:
        raise ValueError(f"error states must have {STATE_DIM} columns")
    if len(imu_window) != len(mean_trajectory) - 1:
        raise ValueError("trajectory does not match the IMU window")
    phi = np.eye(STATE_DIM)
    for k, sample in enumerate(imu_window):
        f = error_transition_matrix(
            mean_trajectory.latitude[k],
            mean_trajectory.altitude[k],
            mean_trajectory.velocity[k],
            mean_trajectory.attitude[k],
            mean_trajectory.compensated_force[k],
            earth,
        )
        phi = (np.eye(STATE_DIM) + f * sample.dt) @ phi
    relative = rows - rows[0]
    out = relative @ phi.T
    out[:, BA] += rows[0, BA]
    out[:, BG] += rows[0, BG]
    return out


def dvl_innovation(mean: NavSolution, dvl: DvlMeasurement) -> np.ndarray:
    """INS-minus-DVL velocity residual in the navigation frame."""
    return mean.vel_ned - mean.attitude @ dvl.vel_body


def predicted_innovation(error_state) -> np.ndarray:
    """Residual an error-state hypothesis predicts for the DVL observation.

    If the truth is offset from the INS by a velocity error dv, the INS reads
    high by -dv relative to the DVL, hence the sign.
    """
    vec = np.asarray(error_state, dtype=float)
    return -vec[DV]


class InsDvlUkf:
    """Error-state UKF fusing strapdown propagation with DVL velocity.

    mode "nespm" propagates sigma points through the navigation algorithm;
    mode "linearized" uses the first-order transition matrix along the mean
    trajectory. Closed-loop operation folds each update's velocity and
    misalignment estimates back into the navigation solution and resets those
    blocks of the mean; bias estimates stay in the mean and compensate the
    IMU during propagation.

    One instance serves one thread at a time; independent instances run
    replications in parallel.
    """

    MODES = ("nespm", "linearized")

    def __init__(
        self,
        nav: NavSolution,
        config: FilterConfig,
        earth: EarthParams = WGS84,
        mode: str = "nespm",
        process_noise_provider: Callable[[], np.ndarray] | None = None,
    ):
        if mode not in self.MODES:
            raise ValueError(f"mode must be one of {self.MODES}")
        self._nav = nav
        self._config = config
        self._earth = earth
        self._mode = mode
        self._weights = compute_weights(
            STATE_DIM,
            config.alpha,
            config.beta,
            config.kappa,
            printed_center_weight=config.printed_center_weight,
        )
        self._mean = np.zeros(STATE_DIM)
        self._cov = config.initial_covariance.copy()
        self._q_provider = process_noise_provider or ConstantProcessNoise(config.process_noise)
        self._repair_events = 0
        self._update_count = 0
        self._central_residual_max = 0.0
        self._diverged = False

    @property
    def nav(self) -> NavSolution:
        return self._nav

    @property
    def error_mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def covariance(self) -> np.ndarray:
        return self._cov.copy()

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def repair_events(self) -> int:
        return self._repair_events

    @property
    def update_count(self) -> int:
        return self._update_count

    @property
    def central_residual_max(self) -> float:
        """Largest velocity/misalignment residual seen on the propagated
        central point; exactly zero when the propagation is healthy."""
        return self._central_residual_max

    def step(self, imu_window: Sequence[ImuSample], dvl: DvlMeasurement | None = None):
        """One filter cycle: time update over the window, then a measurement
        update if a DVL sample is present. Returns the mean trajectory."""
        if self._diverged:
            raise FilterDivergence("filter already diverged")
        q = np.asarray(self._q_provider(), dtype=float)
        if self._config.per_sample_time_update:
            total = sum(s.dt for s in imu_window)
            trajectory = None
            for sample in imu_window:
                part = self._time_update([sample], q * (sample.dt / total))
                trajectory = part if trajectory is None else _concat_trajectories(trajectory, part)
        else:
            trajectory = self._time_update(imu_window, q)
        if dvl is not None:
            self._measurement_update(dvl)
        self._check_divergence()
        return trajectory

    def _time_update(self, imu_window, q) -> MeanTrajectory:
        sigma = generate_sigma_points(Gaussian(self._mean, self._cov), self._weights)
        central = propagate_sigma_nespm(
            self._nav,
            sigma.points if self._mode == "nespm" else sigma.points[:1],
            imu_window,
            self._earth,
        )
        if self._mode == "nespm":
            rows = central.error_states
        else:
            rows = propagate_sigma_linearized(
                sigma.points, central.trajectory, imu_window, self._earth
            )
        residual = float(np.abs(rows[0, :6]).max())
        self._central_residual_max = max(self._central_residual_max, residual)
        predicted = unscented_transform(rows, self._weights, q)
        cov, n_clamped = repair_covariance(predicted.cov)
        if n_clamped:
            self._repair_events += 1
        self._mean = predicted.mean
        self._cov = cov
        self._nav = central.nav
        return central.trajectory

    def _measurement_update(self, dvl: DvlMeasurement):
        sigma = regenerate_sigma_points(Gaussian(self._mean, self._cov), self._weights)
        z = dvl_innovation(self._nav, dvl)
        posterior = measurement_update(
            Gaussian(self._mean, self._cov),
            sigma,
            predicted_innovation,
            z,
            self._config.measurement_noise,
        )
        cov, n_clamped = repair_covariance(posterior.cov)
        if n_clamped:
            self._repair_events += 1
        mean = posterior.mean
        if self._config.closed_loop:
            self._nav = NavSolution(
                self._nav.pos,
                self._nav.vel_ned + mean[DV],
                attitude_plus(self._nav.attitude, mean[DPSI]),
            )
            mean = mean.copy()
            mean[DV] = 0.0
            mean[DPSI] = 0.0
        self._mean = mean
        self._cov = cov
        self._update_count += 1

    def _check_divergence(self):
        trace = float(np.trace(self._cov))
        if not np.isfinite(trace) or trace > self._config.divergence_trace_bound:
            self._diverged = True
            raise FilterDivergence(
                f"covariance trace {trace:.3e} exceeds bound "
                f"{self._config.divergence_trace_bound:.3e}"
            )


def _concat_trajectories(first: MeanTrajectory, second: MeanTrajectory) -> MeanTrajectory:
    return MeanTrajectory(
        times=np.concatenate([first.times, second.times[1:]]),
        latitude=np.concatenate([first.latitude, second.latitude[1:]]),
        longitude=np.concatenate([first.longitude, second.longitude[1:]]),
        altitude=np.concatenate([first.altitude, second.altitude[1:]]),
        velocity=np.concatenate([first.velocity, second.velocity[1:]]),
        attitude=np.concatenate([first.attitude, second.attitude[1:]]),
        compensated_force=np.concatenate(
            [first.compensated_force, second.compensated_force]
        ),
    )
