"""CSV ingestion and emission for IMU / DVL / ground-truth streams.

Schemas (one header line, then numeric rows):

    imu: t,fx,fy,fz,wx,wy,wz                    100 Hz, m/s^2 and rad/s, body frame
    dvl: t,vx,vy,vz                             1 Hz, body-frame velocity, m/s
    gt:  t,lat,lon,h,vn,ve,vd,roll,pitch,yaw    100 Hz, rad / m / m/s / rad

IMU timestamps are interval-end times; per-sample dt is inferred from the
differences (the first sample uses the ground-truth start epoch when a GT
file is present, otherwise the median dt). Rows must be strictly increasing
in time; malformed rows are rejected with their line number.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .insdvl import DvlMeasurement
from .sim import GroundTruth
from .so3 import _euler_to_dcm_arrays
from .strapdown import ImuSample

IMU_HEADER = ["t", "fx", "fy", "fz", "wx", "wy", "wz"]
DVL_HEADER = ["t", "vx", "vy", "vz"]
GT_HEADER = ["t", "lat", "lon", "h", "vn", "ve", "vd", "roll", "pitch", "yaw"]

_GAP_FACTOR = 1.5
_RATE_RATIO_TOL = 0.2  # accepted deviation of the IMU:DVL rate ratio from 100


class DataFormatError(ValueError):
    """Malformed or inconsistent dataset file."""


@dataclass(frozen=True)
class Dataset:
    """Loaded, validated sensor streams."""

    imu: list
    dvl: list
    gt: GroundTruth | None
    imu_rate: float
    dvl_rate: float | None
    gaps: list

    @property
    def duration(self) -> float:
        if not self.imu:
            return 0.0
        start = self.gt.times[0] if self.gt is not None else self.imu[0].t - self.imu[0].dt
        return self.imu[-1].t - float(start)


def _read_rows(path, n_cols):
    rows = []
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or (lineno == 1 and not _is_numeric(row[0])):
                continue
            if len(row) != n_cols:
                raise DataFormatError(f"{path}:{lineno}: expected {n_cols} columns, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    data = np.asarray(rows, dtype=float).reshape(len(rows), n_cols)
    if rows and not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.all(np.isfinite(data), axis=1))[0][0])
        raise DataFormatError(f"{path}: non-finite value in data row {bad + 1}")
    return data


def _is_numeric(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _check_monotone(path, times):
    if times.size == 0:
        return
    diffs = np.diff(times)
    if np.any(diffs <= 0.0):
        bad = int(np.argwhere(diffs <= 0.0)[0][0])
        raise DataFormatError(
            f"{path}: non-monotone time at data row {bad + 2} "
            f"(t={times[bad + 1]!r} after t={times[bad]!r})"
        )


def load_dataset(imu_path, dvl_path=None, gt_path=None) -> Dataset:
    """Load and validate a dataset triplet (DVL and GT optional).

    Validates strictly increasing timestamps per file, an IMU:DVL rate ratio
    of roughly 100:1 when both are present, and reports IMU gaps (intervals
    longer than 1.5x the median) without rejecting them.
    """
    imu_data = _read_rows(imu_path, len(IMU_HEADER))
    if imu_data.shape[0] == 0:
        raise DataFormatError(f"{imu_path}: no IMU rows")
    _check_monotone(imu_path, imu_data[:, 0])

    gt = None
    if gt_path is not None:
        gt_data = _read_rows(gt_path, len(GT_HEADER))
        if gt_data.shape[0] == 0:
            raise DataFormatError(f"{gt_path}: no ground-truth rows")
        _check_monotone(gt_path, gt_data[:, 0])
        gt = GroundTruth(
            times=gt_data[:, 0],
            latitude=gt_data[:, 1],
            longitude=gt_data[:, 2],
            altitude=gt_data[:, 3],
            velocity=gt_data[:, 4:7].copy(),
            euler=gt_data[:, 7:10].copy(),
            dcm=_euler_to_dcm_arrays(gt_data[:, 7], gt_data[:, 8], gt_data[:, 9]),
        )

    times = imu_data[:, 0]
    if times.size > 1:
        diffs = np.diff(times)
        median_dt = float(np.median(diffs))
    else:
        median_dt = 0.01
    first_dt = median_dt
    if gt is not None and times[0] > gt.times[0]:
        first_dt = float(times[0] - gt.times[0])
    dts = np.concatenate([[first_dt], np.diff(times)]) if times.size > 1 else np.array([first_dt])

    gaps = [
        (int(i), float(dts[i]))
        for i in np.argwhere(dts > _GAP_FACTOR * median_dt).ravel()
    ]
    imu = [
        ImuSample(t=float(times[k]), specific_force=imu_data[k, 1:4], angular_rate=imu_data[k, 4:7], dt=float(dts[k]))
        for k in range(times.size)
    ]
    imu_rate = 1.0 / median_dt

    dvl = []
    dvl_rate = None
    if dvl_path is not None:
        dvl_data = _read_rows(dvl_path, len(DVL_HEADER))
        _check_monotone(dvl_path, dvl_data[:, 0])
        dvl = [
            DvlMeasurement(t=float(row[0]), vel_body=row[1:4]) for row in dvl_data
        ]
        if len(dvl) > 1:
            dvl_rate = 1.0 / float(np.median(np.diff(dvl_data[:, 0])))
            ratio = imu_rate / dvl_rate
            if abs(ratio - 100.0) > 100.0 * _RATE_RATIO_TOL:
                raise DataFormatError(
                    f"{dvl_path}: IMU:DVL rate ratio {ratio:.1f} outside 100 +- 20%"
                )

    return Dataset(imu=imu, dvl=dvl, gt=gt, imu_rate=imu_rate, dvl_rate=dvl_rate, gaps=gaps)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])


def write_imu_csv(path, imu):
    _write_csv(
        path,
        IMU_HEADER,
        ([s.t, *s.specific_force, *s.angular_rate] for s in imu),
    )


def write_dvl_csv(path, dvl):
    _write_csv(path, DVL_HEADER, ([m.t, *m.vel_body] for m in dvl))


def write_gt_csv(path, gt: GroundTruth):
    rows = (
        [
            gt.times[k],
            gt.latitude[k],
            gt.longitude[k],
            gt.altitude[k],
            *gt.velocity[k],
            *gt.euler[k],
        ]
        for k in range(len(gt))
    )
    _write_csv(path, GT_HEADER, rows)
