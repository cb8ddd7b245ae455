"""Constant-velocity Kalman filter over (cx, cy, aspect, height).

One filter per tracklet.  Noise scales with the current box height, the
usual convention for pedestrian tracking filters.  All operations are
value-to-value; nothing here is stateful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import BBox

# Motion / observation noise relative to box height.
STD_WEIGHT_POSITION = 1.0 / 20.0
STD_WEIGHT_VELOCITY = 1.0 / 160.0

# 0.95 quantile of the chi-square distribution with 4 degrees of freedom;
# the customary gate for box-measurement association.
GATE_CHI2 = 9.4877

_NDIM = 4
_F = np.eye(2 * _NDIM)
for _i in range(_NDIM):
    _F[_i, _NDIM + _i] = 1.0  # dt = 1 frame
_H = np.eye(_NDIM, 2 * _NDIM)


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Mean (cx, cy, a, h, and velocities) with its 8x8 covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.shape != (8,) or cov.shape != (8, 8):
            raise ValueError("state must be an 8-vector with an 8x8 covariance")
        if np.abs(cov - cov.T).max() > 1e-9:
            raise ValueError("covariance is not symmetric")
        if cov.diagonal().min() < 0:
            raise ValueError("covariance has a negative diagonal entry")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def _measurement(box: BBox) -> np.ndarray:
    if box.height <= 0:
        raise ValueError(f"box height must be positive, got {box.height}")
    cx, cy = box.center
    return np.array([cx, cy, box.width / box.height, box.height])


def state_to_box(s: KalmanState) -> BBox:
    """Current mean as an image box (extents floored at a tiny positive value)."""
    cx, cy, a, h = s.mean[:4]
    h = max(h, 1e-6)
    w = max(a * h, 1e-6)
    return BBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def kf_init(measurement: BBox) -> KalmanState:
    """Start a filter at a measured box with zero velocity."""
    m = _measurement(measurement)
    mean = np.concatenate([m, np.zeros(_NDIM)])
    h = m[3]
    std = np.array([
        2 * STD_WEIGHT_POSITION * h, 2 * STD_WEIGHT_POSITION * h,
        1e-2, 2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h, 10 * STD_WEIGHT_VELOCITY * h,
        1e-5, 10 * STD_WEIGHT_VELOCITY * h,
    ])
    return KalmanState(mean, np.diag(std ** 2))


def _motion_cov(h: float) -> np.ndarray:
    std = np.array([
        STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2,
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5,
        STD_WEIGHT_VELOCITY * h,
    ])
    return np.diag(std ** 2)


def kf_predict(s: KalmanState) -> KalmanState:
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + _motion_cov(s.mean[3])
    return KalmanState(mean, 0.5 * (cov + cov.T))


def _project(s: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """State distribution in measurement space (adds observation noise)."""
    h = s.mean[3]
    std = np.array([STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1,
                    STD_WEIGHT_POSITION * h])
    mean = _H @ s.mean
    cov = _H @ s.covariance @ _H.T + np.diag(std ** 2)
    return mean, cov


def kf_update(s: KalmanState, measurement: BBox) -> KalmanState:
    proj_mean, proj_cov = _project(s)
    chol = scipy.linalg.cho_factor(proj_cov, lower=True, check_finite=False)
    gain = scipy.linalg.cho_solve(chol, (s.covariance @ _H.T).T,
                                  check_finite=False).T
    innovation = _measurement(measurement) - proj_mean
    mean = s.mean + gain @ innovation
    cov = s.covariance - gain @ proj_cov @ gain.T
    return KalmanState(mean, 0.5 * (cov + cov.T))


def gating_distance(s: KalmanState, boxes: list[BBox]) -> list[float]:
    """Squared Mahalanobis distance of each box center from the state.

    Computed on the position components only, under the projected
    (innovation) covariance.
    """
    if not boxes:
        return []
    proj_mean, proj_cov = _project(s)
    mean2 = proj_mean[:2]
    chol = np.linalg.cholesky(proj_cov[:2, :2])
    d = np.array([_measurement(b)[:2] - mean2 for b in boxes])
    z = scipy.linalg.solve_triangular(chol, d.T, lower=True, check_finite=False)
    return [float(v) for v in np.sum(z * z, axis=0)]
