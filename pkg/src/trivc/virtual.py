"""Virtual point correspondences between two views.

A virtual correspondence is a synthesized point match derived only from the
coordinates of real correspondences: the centroid of three matched points
(mean strategy), centroids hedged by axis-aligned shifts (delta strategy),
a ground-truth-consistent point (oracle), or a learned prediction (see
:mod:`trivc.predictor`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .geometry import RelativePose, essential_from_pose

PROVENANCES = ("mean", "delta_plus", "delta_minus", "oracle", "learned")


@dataclass(frozen=True)
class VirtualCorrespondence:
    p1: np.ndarray  # point in view 1
    p2: np.ndarray  # point in view 2
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        p1 = np.asarray(self.p1, dtype=np.float64)
        p2 = np.asarray(self.p2, dtype=np.float64)
        if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
            raise ValueError("virtual correspondence has non-finite coordinates")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)


def mean_point(tri) -> np.ndarray:
    """Arithmetic mean of the three triangle vertices. tri: (3, 2)."""
    tri = np.asarray(tri, dtype=np.float64)
    return tri.mean(axis=0)


def mean_correspondence(view1, view2) -> VirtualCorrespondence:
    """Centroid-to-centroid match of three corresponding points."""
    return VirtualCorrespondence(mean_point(view1), mean_point(view2), "mean")


def triangle_bbox_shift(tri, delta_factor: float):
    """Shift magnitude and axis for the delta strategy: the longest
    axis-aligned bounding-box side of the triangle picks the axis (ties go
    to x), and delta = delta_factor * that side."""
    tri = np.asarray(tri, dtype=np.float64)
    ext = tri.max(axis=0) - tri.min(axis=0)
    longest = float(ext.max())
    if longest <= 1e-12:
        raise DegenerateError("degenerate triangle")
    axis = 0 if ext[0] >= ext[1] else 1
    return delta_factor * longest, axis


def delta_shifts(m2, tri2, delta_factor: float):
    """The two hedge points m2 +- delta along the dominant bbox axis of
    tri2. Returns (plus, minus)."""
    delta, axis = triangle_bbox_shift(tri2, delta_factor)
    m2 = np.asarray(m2, dtype=np.float64)
    step = np.zeros(2)
    step[axis] = delta
    return m2 + step, m2 - step


def project_onto_epipolar_line(M, p1, p2):
    """Orthogonal projection of p2 onto the epipolar line M @ (p1, 1) in the
    second image; M is an essential or fundamental matrix."""
    M = np.asarray(M, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    a, b, c = M @ np.array([p1[0], p1[1], 1.0])
    nsq = a * a + b * b
    if nsq < 1e-30:
        raise DegenerateError("epipolar line undefined")
    d = (a * p2[0] + b * p2[1] + c) / nsq
    return p2 - d * np.array([a, b])


def oracle_correspondence(gt_pose12: RelativePose, m1, tri2) -> VirtualCorrespondence:
    """Ground-truth-consistent virtual match: the view-2 point is the mean
    of tri2 projected onto the true epipolar line of m1."""
    E = essential_from_pose(gt_pose12)
    m2 = mean_point(tri2)
    p2 = project_onto_epipolar_line(E, m1, m2)
    return VirtualCorrespondence(np.asarray(m1, dtype=np.float64), p2, "oracle")


def barycentric_point(tri, bc) -> np.ndarray:
    """a*v1 + b*v2 + c*v3 for barycentric weights (a, b, c)."""
    tri = np.asarray(tri, dtype=np.float64)
    bc = np.asarray(bc, dtype=np.float64)
    return bc @ tri


def barycentric_grid(n: int = 19) -> np.ndarray:
    """Uniform barycentric grid: (a, b) on an n-point grid over [0, 1] with
    a + b <= 1 and c = 1 - a - b. Returns an (m, 3) array, m = n*(n+1)/2."""
    if n < 2:
        raise ValueError("need a grid of at least 2 points per axis")
    out = []
    for i in range(n):
        for j in range(n - i):
            # integer remainder keeps c exactly inside [0, 1]
            out.append((i / (n - 1), j / (n - 1), (n - 1 - i - j) / (n - 1)))
    return np.array(out)


def line_triangle_distance(line, tri) -> float:
    """Distance from the homogeneous 2D line to the closed triangle: zero
    when the line crosses it, otherwise the smallest vertex distance."""
    line = np.asarray(line, dtype=np.float64)
    tri = np.asarray(tri, dtype=np.float64)
    n = np.hypot(line[0], line[1])
    if n < 1e-300:
        return float("inf")
    signed = (tri @ line[:2] + line[2]) / n
    if signed.min() <= 0.0 <= signed.max():
        return 0.0
    return float(np.min(np.abs(signed)))
