"""Pose error metrics, recall AUC, and minimal-configuration counting."""

from __future__ import annotations

import math

import numpy as np

from .geometry import CameraConfiguration, TripletHypothesis


def rotation_error(R_est, R_gt) -> float:
    """Angle (degrees, in [0, 180]) of R_est^T @ R_gt.

    Computed as atan2 of the axis-angle sine and cosine parts, which stays
    accurate for tiny angles where acos of the trace loses half the digits.
    """
    R = np.asarray(R_est, dtype=np.float64).T @ np.asarray(R_gt, dtype=np.float64)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.degrees(math.atan2(np.linalg.norm(v), np.trace(R) - 1.0))


def translation_angle_error(t_est, t_gt) -> float:
    """Unsigned angle (degrees, in [0, 180]) between the two unit vectors.

    Deliberately not folded at 90 degrees: opposite translations score 180.
    """
    a = np.asarray(t_est, dtype=np.float64)
    b = np.asarray(t_gt, dtype=np.float64)
    return math.degrees(math.atan2(np.linalg.norm(np.cross(a, b)), float(a @ b)))


def triplet_pose_error(h: TripletHypothesis, gt: TripletHypothesis) -> float:
    """max(avg rotation error, avg translation error) over pairs 1-2 and 1-3,
    in degrees."""
    er12 = rotation_error(h.pose12.rotation, gt.pose12.rotation)
    er13 = rotation_error(h.pose13.rotation, gt.pose13.rotation)
    et12 = translation_angle_error(h.pose12.translation, gt.pose12.translation)
    et13 = translation_angle_error(h.pose13.translation, gt.pose13.translation)
    return max(0.5 * (er12 + er13), 0.5 * (et12 + et13))


def auc(errors, threshold: float) -> float:
    """Area under the recall curve up to ``threshold`` degrees, in percent.

    The recall curve r(theta) = fraction of errors <= theta is a step
    function; its integral over [0, threshold] is computed exactly, no
    binning. Non-finite errors never count as recalled.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    e = np.asarray(list(errors), dtype=np.float64)
    if e.size == 0:
        raise ValueError("need at least one error value")
    if np.any(e[np.isfinite(e)] < 0):
        raise ValueError("errors must be non-negative")
    contrib = np.clip(threshold - e[np.isfinite(e)], 0.0, None)
    return 100.0 * float(np.sum(contrib)) / (e.size * threshold)


def check_minimal_configuration(cfg: CameraConfiguration, unknown_focal: bool = False):
    """Compare constraint count sum(2*C_P - 3) against the degrees of
    freedom of the N-camera relative pose problem.

    Returns ("under", deficit), ("minimal", 0) or ("over", excess).
    The right-hand side is 6N - 7 for calibrated cameras and 6N - 6 when
    one focal length shared by all cameras is unknown.
    """
    lhs = sum(2 * c - 3 for c in cfg.visibility)
    rhs = 6 * cfg.n_cameras - (6 if unknown_focal else 7)
    if lhs < rhs:
        return ("under", rhs - lhs)
    if lhs == rhs:
        return ("minimal", 0)
    return ("over", lhs - rhs)
