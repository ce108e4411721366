"""Generic scaled-unscented-transform Kalman filter engine.

Sigma-point generation (Cholesky square root, symmetric pairs), the unscented
transform with additive process noise, and the sigma-point measurement
update. Propagation and measurement models plug in as callbacks so different
error-state propagators can share the same cycle.

The functions hold no state; a filter instance owns its own arrays and may be
moved between threads, with one user at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NotPositiveDefiniteError(ValueError):
    """Covariance failed its Cholesky factorization."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (smallest eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class SingularInnovationError(ValueError):
    """Innovation covariance is not invertible."""


@dataclass(frozen=True)
class UtWeights:
    """Scaled-UT weights for a given state dimension.

    lam = alpha^2 (n + kappa) - n; the center covariance weight carries the
    standard (1 - alpha^2 + beta) term. ``printed_center_weight`` switches to
    the (1 + alpha^2 + beta) variant for comparison runs.
    """

    n: int
    alpha: float
    beta: float
    kappa: float
    lam: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class Gaussian:
    """Mean vector and symmetric positive-definite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        n = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (n, n):
            raise ValueError("mean must be (n,), covariance (n, n)")
        if np.abs(cov - cov.T).max() > 1e-9 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class SigmaSet:
    """2n+1 sigma points (rows) with their generating weights."""

    points: np.ndarray
    weights: UtWeights


def compute_weights(
    n: int,
    alpha: float = 1e-3,
    beta: float = 2.0,
    kappa: float = 0.0,
    printed_center_weight: bool = False,
) -> UtWeights:
    """Scaled-UT weights: w0_mean = lam/(n+lam), wi = 1/(2(n+lam)) for i >= 1."""
    if n < 1:
        raise ValueError("state dimension must be >= 1")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if n + kappa <= 0.0:
        raise ValueError("n + kappa must be positive")
    lam = alpha**2 * (n + kappa) - n
    scale = n + lam
    if scale == 0.0:
        raise ValueError("n + lam must be nonzero")
    w_mean = np.full(2 * n + 1, 1.0 / (2.0 * scale))
    w_mean[0] = lam / scale
    w_cov = w_mean.copy()
    if printed_center_weight:
        w_cov[0] += 1.0 + alpha**2 + beta
    else:
        w_cov[0] += 1.0 - alpha**2 + beta
    return UtWeights(n=n, alpha=alpha, beta=beta, kappa=kappa, lam=lam, mean=w_mean, cov=w_cov)


def generate_sigma_points(belief: Gaussian, weights: UtWeights) -> SigmaSet:
    """Symmetric sigma points mean +- sqrt((n+lam) P) column offsets.

    Offsets are the columns of the lower-triangular Cholesky factor scaled by
    sqrt(n + lam). Raises NotPositiveDefiniteError when the factorization
    fails, reporting the smallest eigenvalue.
    """
    n = weights.n
    if belief.dim != n:
        raise ValueError(f"belief dimension {belief.dim} != weights dimension {n}")
    scale = n + weights.lam
    if scale <= 0.0:
        raise ValueError("n + lam must be positive to take a matrix square root")
    try:
        lower = np.linalg.cholesky(belief.cov)
    except np.linalg.LinAlgError:
        min_eig = float(np.linalg.eigvalsh((belief.cov + belief.cov.T) / 2.0).min())
        raise NotPositiveDefiniteError("covariance is not positive definite", min_eig)
    offsets = np.sqrt(scale) * lower.T  # row i is column i of the factor
    points = np.empty((2 * n + 1, n))
    points[0] = belief.mean
    points[1 : n + 1] = belief.mean + offsets
    points[n + 1 :] = belief.mean - offsets
    return SigmaSet(points=points, weights=weights)


def regenerate_sigma_points(predicted: Gaussian, weights: UtWeights) -> SigmaSet:
    """Sigma points of the predicted belief, ahead of a measurement update."""
    return generate_sigma_points(predicted, weights)


def unscented_transform(points, weights: UtWeights, additive_cov=None) -> Gaussian:
    """Weighted mean and covariance of propagated sigma points plus noise.

    ``points`` has one propagated point per row and may live in a different
    space than the generating state (e.g. measurement space). The output
    covariance is symmetrized.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] != 2 * weights.n + 1:
        raise ValueError(f"expected {2 * weights.n + 1} sigma points, got {pts.shape}")
    mean = weights.mean @ pts
    diffs = pts - mean
    cov = (weights.cov[:, None] * diffs).T @ diffs
    if additive_cov is not None:
        q = np.asarray(additive_cov, dtype=float)
        if q.shape != cov.shape:
            raise ValueError("additive covariance has the wrong shape")
        cov = cov + q
    cov = (cov + cov.T) / 2.0
    return Gaussian(mean, cov)


def measurement_update(
    predicted: Gaussian,
    sigma: SigmaSet,
    measurement_model: Callable[[np.ndarray], np.ndarray],
    z,
    measurement_cov,
) -> Gaussian:
    """Sigma-point Kalman update of a predicted belief with observation z.

    The innovation covariance gets the additive measurement noise; the gain
    solves against it directly (SingularInnovationError if that fails). The
    posterior covariance P - K S K^T is symmetrized.
    """
    z = np.asarray(z, dtype=float)
    r = np.asarray(measurement_cov, dtype=float)
    w = sigma.weights
    predicted_meas = np.array([measurement_model(p) for p in sigma.points], dtype=float)
    if predicted_meas.ndim != 2:
        raise ValueError("measurement model must return vectors")
    z_mean = w.mean @ predicted_meas
    dz = predicted_meas - z_mean
    s = (w.cov[:, None] * dz).T @ dz + r
    s = (s + s.T) / 2.0
    dx = sigma.points - predicted.mean
    cross = (w.cov[:, None] * dx).T @ dz
    try:
        gain = np.linalg.solve(s, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc
    mean = predicted.mean + gain @ (z - z_mean)
    cov = predicted.cov - gain @ s @ gain.T
    cov = (cov + cov.T) / 2.0
    return Gaussian(mean, cov)


def repair_covariance(cov, floor: float = 1e-12):
    """Clamp eigenvalues below ``floor`` after symmetrizing.

    Returns (repaired covariance, number of clamped eigenvalues). The scaled
    UT's large negative center weight can leave a prediction indefinite in
    pathological cases; callers count repairs as diagnostics.
    """
    sym = (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    n_clamped = int(np.sum(eigvals < floor))
    if n_clamped == 0:
        return sym, 0
    clamped = np.maximum(eigvals, floor)
    repaired = (eigvecs * clamped) @ eigvecs.T
    return (repaired + repaired.T) / 2.0, n_clamped
