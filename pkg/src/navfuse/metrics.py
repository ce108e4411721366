"""Velocity and misalignment RMS error metrics plus the improvement ratio."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .so3 import _dcm_to_euler_arrays


def vrmse(est_vel, gt_vel) -> float:
    """Root mean square of velocity-error norms over aligned epochs (m/s)."""
    est = np.asarray(est_vel, dtype=float)
    gt = np.asarray(gt_vel, dtype=float)
    if est.shape != gt.shape or est.ndim != 2 or est.shape[1] != 3 or est.shape[0] == 0:
        raise ValueError("velocity arrays must be matching non-empty (N, 3)")
    err = est - gt
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def vrmse_avg(values) -> float:
    """Quadratic mean of per-track VRMSE values."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("need at least one track value")
    return float(np.sqrt(np.mean(vals**2)))


@dataclass(frozen=True)
class MisalignmentRmse:
    """RMS of misalignment Euler-vector norms, with gimbal-lock epochs
    excluded (counted), and the geodesic-angle RMS as a secondary value."""

    value: float
    excluded: int
    geodesic: float


def mrmse(est_att, gt_att) -> MisalignmentRmse:
    """Misalignment RMSE between estimated and ground-truth attitudes (rad).

    The per-epoch misalignment vector is the ZYX Euler triplet of
    C_est @ C_gt^T; epochs where that matrix is at gimbal lock are excluded
    from the RMS and counted. The geodesic rotation angle, defined at every
    epoch, is reported alongside.
    """
    est = np.asarray(est_att, dtype=float)
    gt = np.asarray(gt_att, dtype=float)
    if est.shape != gt.shape or est.ndim != 3 or est.shape[1:] != (3, 3) or est.shape[0] == 0:
        raise ValueError("attitude arrays must be matching non-empty (N, 3, 3)")
    err = est @ np.swapaxes(gt, -1, -2)
    roll, pitch, yaw, gimbal = _dcm_to_euler_arrays(err)
    norms_sq = roll**2 + pitch**2 + yaw**2
    valid = ~gimbal
    if not np.any(valid):
        raise ValueError("all epochs are at gimbal lock")
    value = float(np.sqrt(np.mean(norms_sq[valid])))
    trace = np.trace(err, axis1=-2, axis2=-1)
    angle = np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0))
    geodesic = float(np.sqrt(np.mean(angle**2)))
    return MisalignmentRmse(value=value, excluded=int(np.sum(gimbal)), geodesic=geodesic)


def improvement(baseline: float, ours: float) -> float:
    """Percent improvement 100 (baseline - ours) / baseline, one decimal.

    The raw ratio is rounded at the ninth decimal first so binary dust like
    8.749999999999998 lands on 8.8 rather than 8.7.
    """
    if not (np.isfinite(baseline) and baseline > 0.0):
        raise ValueError("baseline must be positive")
    if not np.isfinite(ours):
        raise ValueError("ours must be finite")
    pct = round(100.0 * (baseline - ours) / baseline, 9)
    return float(Decimal(repr(pct)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))
