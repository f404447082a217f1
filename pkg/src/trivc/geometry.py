"""Core geometric types and epipolar operations.

Conventions used throughout the library:

- Image points are normalized (calibrated) 2D coordinates; the homogeneous
  lift is always (x, y, 1).
- A relative pose (R, t) maps camera-1 coordinates to camera-2 coordinates,
  x2 = R @ x1 + t, with ``t`` scaled to unit norm (the scale of a two-view
  reconstruction is unobservable).
- The essential matrix satisfies x2h @ E @ x1h == 0 for corresponding
  homogeneous points, i.e. E = [t]x @ R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CheiralityError, DegenerateError

# Tolerances from the type contracts.
_ORTHO_TOL = 1e-9
_UNIT_TOL = 1e-9

#: Sentinel returned by residual functions when the denominator collapses.
#: Callers treat it as "worse than any threshold".
UNDEFINED_RESIDUAL = math.inf


def _as_matrix(a, shape, name):
    m = np.asarray(a, dtype=np.float64)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class RelativePose:
    """Rotation plus unit-norm translation between two cameras."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _as_matrix(self.rotation, (3, 3), "rotation")
        t = _as_matrix(self.translation, (3,), "translation")
        if np.linalg.norm(R @ R.T - np.eye(3)) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        if abs(np.linalg.norm(t) - 1.0) > _UNIT_TOL:
            raise ValueError("translation is not unit norm")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)


@dataclass(frozen=True)
class TripletHypothesis:
    """Candidate solution for a three-view problem: poses 1->2 and 1->3,
    plus the shared focal length when it is part of the model."""

    pose12: RelativePose
    pose13: RelativePose
    focal: float | None = None

    def __post_init__(self):
        if self.focal is not None and not (self.focal > 0):
            raise ValueError("focal must be positive when present")


@dataclass(frozen=True)
class CameraConfiguration:
    """Point-visibility pattern: how many cameras observe each tracked point."""

    n_cameras: int
    visibility: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_cameras < 2:
            raise ValueError("need at least two cameras")
        vis = tuple(int(c) for c in self.visibility)
        if any(c < 2 for c in vis):
            raise ValueError("every point must be seen by at least two cameras")
        object.__setattr__(self, "visibility", vis)


def skew(v):
    """Cross-product matrix [v]x."""
    v = np.asarray(v, dtype=np.float64)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def essential_from_pose(pose: RelativePose) -> np.ndarray:
    """E = [t]x @ R for a valid relative pose."""
    return skew(pose.translation) @ pose.rotation


def is_essential(E, *, rank_tol=1e-8, sv_tol=1e-6) -> bool:
    """Check the essential-matrix invariants: rank 2 with two equal
    nonzero singular values."""
    s = np.linalg.svd(np.asarray(E, dtype=np.float64), compute_uv=False)
    if s[0] <= 0.0:
        return False
    if s[2] > rank_tol * s[0]:
        return False
    return (s[0] - s[1]) <= sv_tol * s[0]


def project_to_essential(E) -> np.ndarray:
    """Nearest matrix (Frobenius) with singular values (s, s, 0)."""
    U, s, Vt = np.linalg.svd(np.asarray(E, dtype=np.float64))
    sigma = 0.5 * (s[0] + s[1])
    return (U * np.array([sigma, sigma, 0.0])) @ Vt


def _lift(p):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return np.array([p[0], p[1], 1.0])
    return np.concatenate([p, np.ones((p.shape[0], 1))], axis=1)


def sampson_error(E, x1, x2) -> float:
    """First-order geometric error of (x1, x2) w.r.t. the epipolar constraint.

    Returns |x2h.E.x1h| / sqrt(|(E x1h)_12|^2 + |(E^T x2h)_12|^2), or
    ``UNDEFINED_RESIDUAL`` when the denominator vanishes.
    """
    E = np.asarray(E, dtype=np.float64)
    p1 = _lift(x1)
    p2 = _lift(x2)
    Ex1 = E @ p1
    Etx2 = E.T @ p2
    denom_sq = Ex1[0] ** 2 + Ex1[1] ** 2 + Etx2[0] ** 2 + Etx2[1] ** 2
    denom = math.sqrt(denom_sq)
    if denom < 1e-15:
        return UNDEFINED_RESIDUAL
    return abs(float(p2 @ Ex1)) / denom


def sampson_errors(E, x1, x2) -> np.ndarray:
    """Vectorized :func:`sampson_error` over arrays of shape (n, 2).

    Degenerate rows get ``UNDEFINED_RESIDUAL``.
    """
    E = np.asarray(E, dtype=np.float64)
    p1 = _lift(np.asarray(x1, dtype=np.float64))
    p2 = _lift(np.asarray(x2, dtype=np.float64))
    Ex1 = p1 @ E.T
    Etx2 = p2 @ E
    num = np.abs(np.sum(p2 * Ex1, axis=1))
    denom = np.sqrt(
        Ex1[:, 0] ** 2 + Ex1[:, 1] ** 2 + Etx2[:, 0] ** 2 + Etx2[:, 1] ** 2
    )
    out = np.full(num.shape, UNDEFINED_RESIDUAL)
    ok = denom >= 1e-15
    out[ok] = num[ok] / denom[ok]
    return out


def _point_line_distance(p, line) -> float:
    n = math.hypot(line[0], line[1])
    if n < 1e-15:
        return UNDEFINED_RESIDUAL
    return abs(float(line[0] * p[0] + line[1] * p[1] + line[2])) / n


def symmetric_epipolar_error(E, x1, x2) -> float:
    """Average of the point-to-epipolar-line distances in both images."""
    E = np.asarray(E, dtype=np.float64)
    p1 = _lift(x1)
    p2 = _lift(x2)
    d2 = _point_line_distance(p2, E @ p1)
    d1 = _point_line_distance(p1, E.T @ p2)
    if math.isinf(d1) or math.isinf(d2):
        return UNDEFINED_RESIDUAL
    return 0.5 * (d1 + d2)


def triangulate(pose12: RelativePose, x1, x2) -> np.ndarray:
    """Two-view triangulation in camera-1 coordinates.

    Linear DLT followed by a single Gauss-Newton reprojection refinement
    step. Raises :class:`DegenerateError` when the viewing rays are parallel
    to within 1e-6 rad. The returned point may have negative depth; callers
    decide what to do with points behind the camera.
    """
    R, t = pose12.rotation, pose12.translation
    p1 = _lift(x1)
    p2 = _lift(x2)

    d1 = p1 / np.linalg.norm(p1)
    d2 = R.T @ p2
    d2 /= np.linalg.norm(d2)
    cross = np.linalg.norm(np.cross(d1, d2))
    if cross < 1e-6:
        raise DegenerateError("degenerate triangulation: rays are parallel")

    # DLT with P1 = [I | 0], P2 = [R | t].
    P2 = np.concatenate([R, t[:, None]], axis=1)
    A = np.empty((4, 4))
    A[0] = np.array([-1.0, 0.0, p1[0], 0.0])
    A[1] = np.array([0.0, -1.0, p1[1], 0.0])
    A[2] = p2[0] * P2[2] - P2[0]
    A[3] = p2[1] * P2[2] - P2[1]
    _, _, Vt = np.linalg.svd(A)
    Xh = Vt[-1]
    if abs(Xh[3]) < 1e-15:
        raise DegenerateError("degenerate triangulation: point at infinity")
    X = Xh[:3] / Xh[3]

    # One Gauss-Newton step on the 4 reprojection residuals.
    X = _refine_triangulated(X, R, t, x1, x2)
    return X


def _refine_triangulated(X, R, t, x1, x2):
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    c1 = X
    c2 = R @ X + t
    if abs(c1[2]) < 1e-15 or abs(c2[2]) < 1e-15:
        return X
    r = np.array(
        [
            c1[0] / c1[2] - x1[0],
            c1[1] / c1[2] - x1[1],
            c2[0] / c2[2] - x2[0],
            c2[1] / c2[2] - x2[1],
        ]
    )
    J = np.empty((4, 3))
    J[0] = np.array([1.0 / c1[2], 0.0, -c1[0] / c1[2] ** 2])
    J[1] = np.array([0.0, 1.0 / c1[2], -c1[1] / c1[2] ** 2])
    J[2] = (R[0] * c2[2] - c2[0] * R[2]) / c2[2] ** 2
    J[3] = (R[1] * c2[2] - c2[1] * R[2]) / c2[2] ** 2
    try:
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
    except np.linalg.LinAlgError:
        return X
    Xn = X + step
    # Keep the refinement only if it did not blow up.
    if np.all(np.isfinite(Xn)):
        return Xn
    return X


def project(pose: RelativePose | None, X):
    """Project a camera-1-frame point into the view given by ``pose``
    (``None`` means camera 1 itself). Returns ((x, y), depth)."""
    X = np.asarray(X, dtype=np.float64)
    if pose is None:
        c = X
    else:
        c = pose.rotation @ X + pose.translation
    return c[:2] / c[2], float(c[2])


_W_DECOMP = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def essential_candidate_poses(E):
    """The four (R, t) factorizations of an essential matrix, in the
    canonical order (R1, +t), (R1, -t), (R2, +t), (R2, -t)."""
    U, _, Vt = np.linalg.svd(np.asarray(E, dtype=np.float64))
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    R1 = U @ _W_DECOMP @ Vt
    R2 = U @ _W_DECOMP.T @ Vt
    t = U[:, 2]
    t = t / np.linalg.norm(t)
    return [
        RelativePose(R1, t),
        RelativePose(R1, -t),
        RelativePose(R2, t),
        RelativePose(R2, -t),
    ]


def _depth_pair(R, t, p1, p2):
    """Least-squares depths (l1, l2) with l2*x2h = l1*R@x1h + t,
    vectorized over correspondences. p1, p2 are (n, 3) homogeneous."""
    a = p1 @ R.T  # (n, 3): R @ x1h per row
    b = p2
    aa = np.sum(a * a, axis=1)
    ab = np.sum(a * b, axis=1)
    bb = np.sum(b * b, axis=1)
    at = a @ t
    bt = b @ t
    # Normal equations for min || l1*a - l2*b + t ||^2.
    det = aa * bb - ab * ab
    det = np.where(np.abs(det) < 1e-18, np.nan, det)
    l1 = (-at * bb + ab * bt) / det
    l2 = (-at * ab + aa * bt) / det
    return l1, l2


def decompose_essential(E, supports) -> RelativePose:
    """Choose the (R, t) factorization that puts the most support
    correspondences in front of both cameras.

    ``supports`` is a sequence of (x1, x2) pairs or an (n, 2, 2) array.
    Ties go to the earliest candidate in the canonical ordering.
    """
    sup = np.asarray(supports, dtype=np.float64)
    if sup.ndim == 2:
        sup = sup[None]
    if sup.shape[0] < 1:
        raise ValueError("need at least one support correspondence")
    p1 = _lift(sup[:, 0])
    p2 = _lift(sup[:, 1])

    candidates = essential_candidate_poses(E)
    counts = []
    for pose in candidates:
        l1, l2 = _depth_pair(pose.rotation, pose.translation, p1, p2)
        ok = (l1 > 0) & (l2 > 0)
        counts.append(int(np.count_nonzero(ok)))
    best = int(np.argmax(counts))
    if counts[best] == 0:
        raise CheiralityError("cheirality failure: no candidate sees the supports")
    return candidates[best]
