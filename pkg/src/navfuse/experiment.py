"""Experiment orchestration: configuration, filter driving, reports.

A run takes sensor streams (simulated or loaded from CSV), drives the
error-state filter one DVL epoch at a time, and emits a JSON report plus
per-sample error-trace CSVs. Traces and reports are byte-reproducible for a
fixed seed and configuration (the report's timing field is informational and
excluded from reproducibility comparisons).

Independent tracks or replications each own their filter instance and RNG
stream; report assembly is a single sequential reduction.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dataset import load_dataset, write_dvl_csv, write_gt_csv, write_imu_csv
from .earth import WGS84, EarthParams, GeodeticPosition
from .insdvl import (
    BA,
    BG,
    DPSI,
    DV,
    STATE_DIM,
    FilterConfig,
    FilterDivergence,
    InsDvlUkf,
)
from .metrics import mrmse, vrmse, vrmse_avg
from .sim import CorruptedRun, CorruptionSpec, GroundTruth, Segment, TrajectorySpec, corrupt, simulate_trajectory
from .so3 import _dcm_to_euler_arrays, log_so3
from .strapdown import NavSolution, na_cycle_batch

TRACE_HEADER = "t,dv_n,dv_e,dv_d,mis_roll,mis_pitch,mis_yaw,nees"


def trajectory_preset(name: str, duration: float) -> TrajectorySpec:
    """Built-in trajectory profiles scaled to a total duration."""
    start = GeodeticPosition(np.deg2rad(32.0), np.deg2rad(34.5), -10.0)
    third = duration / 3.0
    if name == "straight":
        return TrajectorySpec(
            start=start,
            speed=1.5,
            heading=np.deg2rad(45.0),
            segments=(Segment(duration=duration),),
        )
    if name == "gentle":
        return TrajectorySpec(
            start=start,
            speed=1.5,
            heading=np.deg2rad(20.0),
            segments=(
                Segment(duration=third),
                Segment(duration=third, yaw_rate=np.deg2rad(3.0)),
                Segment(duration=duration - 2.0 * third),
            ),
        )
    if name == "maneuver":
        quarter = duration / 4.0
        return TrajectorySpec(
            start=start,
            speed=1.0,
            heading=0.0,
            segments=(
                Segment(duration=quarter, accel=0.05),
                Segment(duration=quarter, yaw_rate=np.deg2rad(9.0)),
                Segment(duration=quarter, accel=-0.04, yaw_rate=np.deg2rad(-6.0)),
                Segment(duration=duration - 3.0 * quarter, vertical_speed=0.1),
            ),
        )
    raise ValueError(f"unknown trajectory preset {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every key can come from a config file."""

    mode: str = "nespm"
    seed: int = 0
    trajectory: str = "maneuver"  # preset name, or "dataset" with the paths below
    duration_s: float = 60.0
    imu_csv: str = ""
    dvl_csv: str = ""
    gt_csv: str = ""
    ukf_alpha: float = 1e-3
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0
    closed_loop: bool = True
    per_sample_update: bool = False
    printed_center_weight: bool = False
    divergence_trace_bound: float = 1e4
    init_vel_std_horizontal: float = 0.25
    init_vel_std_vertical: float = 0.05
    init_misalign_std_deg: float = 0.01
    accel_noise_std: float = 0.03
    gyro_noise_std: float = 7.3e-6
    accel_bias_std: float = 0.3
    gyro_bias_std: float = 7.3e-5
    dvl_noise_std: float = 0.0
    r_floor_std: float = 0.01
    q_diag: tuple = ()
    r_diag: tuple = ()
    p0_diag: tuple = ()

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


_BOOL_KEYS = {"closed_loop", "per_sample_update", "printed_center_weight"}
_INT_KEYS = {"seed"}
_STR_KEYS = {"mode", "trajectory", "imu_csv", "dvl_csv", "gt_csv"}
_LIST_KEYS = {"q_diag", "r_diag", "p0_diag"}


def parse_config_file(path) -> dict:
    """Parse a flat ``key = value`` config file ('#' starts a comment)."""
    values = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if key in _STR_KEYS:
            kwargs[key] = raw
        elif key in _BOOL_KEYS:
            if str(raw).lower() not in ("true", "false", "0", "1"):
                raise ValueError(f"config key {key!r} must be boolean")
            kwargs[key] = str(raw).lower() in ("true", "1")
        elif key in _INT_KEYS:
            kwargs[key] = int(raw)
        elif key in _LIST_KEYS:
            kwargs[key] = tuple(float(x) for x in str(raw).split(",") if x.strip())
        else:
            kwargs[key] = float(raw)
    return ExperimentConfig(**kwargs)


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = parse_config_file(path) if path else {}
    config = config_from_mapping(values)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        config = replace(config, **overrides)
    if config.mode not in InsDvlUkf.MODES:
        raise ValueError(f"mode must be one of {InsDvlUkf.MODES}")
    return config


def corruption_from_config(config: ExperimentConfig) -> CorruptionSpec:
    return CorruptionSpec(
        vel_std_horizontal=config.init_vel_std_horizontal,
        vel_std_vertical=config.init_vel_std_vertical,
        misalign_std_deg=config.init_misalign_std_deg,
        accel_noise_std=config.accel_noise_std,
        gyro_noise_std=config.gyro_noise_std,
        accel_bias_std=config.accel_bias_std,
        gyro_bias_std=config.gyro_bias_std,
        dvl_noise_std=config.dvl_noise_std,
        seed=config.seed,
    )


def default_filter_config(
    corruption: CorruptionSpec,
    window_s: float = 1.0,
    imu_dt: float = 0.01,
    r_floor_std: float = 0.01,
    **kwargs,
) -> FilterConfig:
    """Filter tuning matched to the corruption statistics.

    The initial covariance mirrors the drawn initial errors and biases; the
    process noise is the velocity/attitude random walk accumulated from the
    IMU white noise over one update window; the measurement noise matches the
    DVL noise with a small floor so a noiseless DVL still yields a
    well-conditioned update.
    """
    mis = np.deg2rad(corruption.misalign_std_deg)
    p0 = np.diag(
        [
            corruption.vel_std_horizontal**2,
            corruption.vel_std_horizontal**2,
            corruption.vel_std_vertical**2,
            mis**2,
            mis**2,
            mis**2,
            *([corruption.accel_bias_std**2] * 3),
            *([corruption.gyro_bias_std**2] * 3),
        ]
    )
    q_vel = corruption.accel_noise_std**2 * imu_dt * window_s
    q_att = corruption.gyro_noise_std**2 * imu_dt * window_s
    q = np.diag([q_vel] * 3 + [q_att] * 3 + [0.0] * 6)
    r_std = max(corruption.dvl_noise_std, r_floor_std)
    r = np.eye(3) * r_std**2
    return FilterConfig(process_noise=q, measurement_noise=r, initial_covariance=p0, **kwargs)


def filter_config_from_experiment(config: ExperimentConfig, imu_dt: float = 0.01) -> FilterConfig:
    base = default_filter_config(
        corruption_from_config(config),
        imu_dt=imu_dt,
        r_floor_std=config.r_floor_std,
        alpha=config.ukf_alpha,
        beta=config.ukf_beta,
        kappa=config.ukf_kappa,
        closed_loop=config.closed_loop,
        per_sample_time_update=config.per_sample_update,
        printed_center_weight=config.printed_center_weight,
        divergence_trace_bound=config.divergence_trace_bound,
    )
    q = np.diag(config.q_diag) if len(config.q_diag) == STATE_DIM else base.process_noise
    r = np.diag(config.r_diag) if len(config.r_diag) == 3 else base.measurement_noise
    p0 = np.diag(config.p0_diag) if len(config.p0_diag) == STATE_DIM else base.initial_covariance
    return replace(base, process_noise=q, measurement_noise=r, initial_covariance=p0)


@dataclass
class TrackResult:
    name: str
    vrmse: float
    mrmse: float
    mrmse_geodesic: float
    mrmse_excluded: int
    free_inertial_vrmse: float
    updates: int
    covariance_repairs: int
    diverged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RunReport:
    tracks: list
    vrmse_avg: float
    mrmse_avg: float
    mode: str
    seed: int
    config: dict
    timing_s: float
    diverged: bool

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["tracks"] = [t.to_dict() for t in self.tracks]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _group_windows(imu, dvl, start_time):
    """Split the IMU stream into per-second windows, attaching the DVL sample
    whose timestamp matches each window's end."""
    dvl_by_time = {round(m.t, 6): m for m in dvl}
    windows = []
    current = []
    boundary = start_time + 1.0
    for sample in imu:
        current.append(sample)
        if sample.t >= boundary - 1e-9:
            windows.append((current, dvl_by_time.get(round(boundary, 6))))
            current = []
            boundary += 1.0
    if current:
        windows.append((current, None))
    return windows


@dataclass
class TrackData:
    """One track's streams ready for filtering."""

    name: str
    gt: GroundTruth
    run: CorruptedRun


def build_tracks(config: ExperimentConfig):
    """Materialize the track list for a configuration (simulation or files)."""
    if config.trajectory == "dataset":
        if not config.imu_csv or not config.gt_csv:
            raise ValueError("dataset mode requires imu_csv and gt_csv paths")
        data = load_dataset(config.imu_csv, config.dvl_csv or None, config.gt_csv)
        run = CorruptedRun(
            initial_nav=data.gt.nav_solution(0),
            imu=data.imu,
            dvl=data.dvl,
            accel_bias=np.zeros(3),
            gyro_bias=np.zeros(3),
            initial_velocity_error=np.zeros(3),
            initial_misalignment=np.zeros(3),
            seed=config.seed,
        )
        return [TrackData(name=Path(config.imu_csv).stem, gt=data.gt, run=run)]
    spec = trajectory_preset(config.trajectory, config.duration_s)
    gt, imu, dvl = simulate_trajectory(spec)
    run = corrupt(gt, imu, dvl, corruption_from_config(config))
    return [TrackData(name=f"sim-{config.trajectory}", gt=gt, run=run)]


def _free_inertial_velocity(initial_nav, imu, earth):
    lat = np.array([initial_nav.pos.latitude])
    lon = np.array([initial_nav.pos.longitude])
    alt = np.array([initial_nav.pos.altitude])
    vel = initial_nav.vel_ned[None, :].copy()
    dcm = initial_nav.attitude[None, :, :].copy()
    out = np.empty((len(imu), 3))
    for k, sample in enumerate(imu):
        lat, lon, alt, vel, dcm = na_cycle_batch(
            lat, lon, alt, vel, dcm, sample.specific_force, sample.angular_rate, sample.dt, earth
        )
        out[k] = vel[0]
    return out


def _nees(gt_nav, filt, accel_bias, gyro_bias) -> float:
    residual = np.empty(STATE_DIM)
    mean = filt.error_mean
    residual[DV] = gt_nav.vel_ned - filt.nav.vel_ned - mean[DV]
    residual[DPSI] = log_so3(gt_nav.attitude @ filt.nav.attitude.T) - mean[DPSI]
    residual[BA] = accel_bias - mean[BA]
    residual[BG] = gyro_bias - mean[BG]
    return float(residual @ np.linalg.solve(filt.covariance, residual))


def run_track(
    track: TrackData,
    filter_config: FilterConfig,
    mode: str,
    earth: EarthParams = WGS84,
    compute_nees: bool = True,
):
    """Filter one track. Returns (TrackResult, trace rows, nees per update)."""
    gt = track.gt
    run = track.run
    filt = InsDvlUkf(run.initial_nav, filter_config, earth=earth, mode=mode)
    windows = _group_windows(run.imu, run.dvl, float(gt.times[0]))

    n = len(run.imu)
    est_vel = np.empty((n, 3))
    est_att = np.empty((n, 3, 3))
    nees_by_row = {}
    nees_values = []
    diverged = False
    row = 0
    for window, dvl in windows:
        try:
            traj = filt.step(window, dvl)
        except FilterDivergence:
            diverged = True
            est_vel = est_vel[:row]
            est_att = est_att[:row]
            break
        count = len(window)
        est_vel[row : row + count] = traj.velocity[1:]
        est_att[row : row + count] = traj.attitude[1:]
        row += count
        if dvl is not None:
            # The trajectory predates the measurement update; overwrite the
            # last sample with the corrected solution.
            est_vel[row - 1] = filt.nav.vel_ned
            est_att[row - 1] = filt.nav.attitude
            if compute_nees:
                value = _nees(gt.nav_solution(row), filt, run.accel_bias, run.gyro_bias)
                nees_by_row[row - 1] = value
                nees_values.append(value)

    gt_vel = gt.velocity[1 : row + 1]
    gt_att = gt.dcm[1 : row + 1]
    track_vrmse = vrmse(est_vel, gt_vel) if row else float("nan")
    att_result = mrmse(est_att, gt_att) if row else None
    free_vel = _free_inertial_velocity(run.initial_nav, run.imu, earth)
    free_vrmse = vrmse(free_vel, gt.velocity[1:])

    trace_rows = []
    dv = est_vel - gt_vel
    err_att = est_att @ np.swapaxes(gt_att, -1, -2)
    roll, pitch, yaw, _ = _dcm_to_euler_arrays(err_att)
    for k in range(row):
        nees_str = repr(nees_by_row[k]) if k in nees_by_row else ""
        trace_rows.append(
            ",".join(
                [repr(float(gt.times[k + 1]))]
                + [repr(float(x)) for x in dv[k]]
                + [repr(float(roll[k])), repr(float(pitch[k])), repr(float(yaw[k]))]
                + [nees_str]
            )
        )

    result = TrackResult(
        name=track.name,
        vrmse=track_vrmse,
        mrmse=att_result.value if att_result else float("nan"),
        mrmse_geodesic=att_result.geodesic if att_result else float("nan"),
        mrmse_excluded=att_result.excluded if att_result else 0,
        free_inertial_vrmse=free_vrmse,
        updates=filt.update_count,
        covariance_repairs=filt.repair_events,
        diverged=diverged,
    )
    return result, trace_rows, nees_values


def run_experiment(config: ExperimentConfig, out_dir=None) -> RunReport:
    """Run the configured experiment over all tracks and emit the report.

    When ``out_dir`` is given, writes ``report.json`` plus one
    ``traces_<track>.csv`` per track (velocity error, misalignment Euler
    components, and NEES at update epochs for simulated tracks).
    """
    started = time.perf_counter()
    tracks = build_tracks(config)
    imu_dt = tracks[0].run.imu[0].dt if tracks[0].run.imu else 0.01
    filter_config = filter_config_from_experiment(config, imu_dt=imu_dt)
    compute_nees = config.trajectory != "dataset"

    results = []
    traces = {}
    for track in tracks:
        result, trace_rows, _ = run_track(
            track, filter_config, config.mode, compute_nees=compute_nees
        )
        results.append(result)
        traces[track.name] = trace_rows

    report = RunReport(
        tracks=results,
        vrmse_avg=vrmse_avg([r.vrmse for r in results]),
        mrmse_avg=vrmse_avg([r.mrmse for r in results]),
        mode=config.mode,
        seed=config.seed,
        config=config.to_dict(),
        timing_s=time.perf_counter() - started,
        diverged=any(r.diverged for r in results),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        for name, rows in traces.items():
            (out / f"traces_{name}.csv").write_text(
                TRACE_HEADER + "\n" + "\n".join(rows) + "\n"
            )
    return report
