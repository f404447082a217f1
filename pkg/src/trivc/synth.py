"""Seeded synthetic scenes, camera triplets, projections, noise, and
outlier contamination for the benchmark experiments.

Unit conventions: calibrated instances are in normalized coordinates, with
1000 px per unit for pixel-quoted noise levels (a 1000 px focal on a
2000x2000 virtual image, principal point at the center). Shared-focal
instances are in scaled pixels (pixels divided by the 2000 px image side),
so the focal length is O(1) and 2000 px make one unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError
from .geometry import RelativePose, TripletHypothesis

NOMINAL_FOCAL_PX = 1000.0
NOMINAL_IMAGE_PX = 2000.0

#: Largest perturbation of the optical axis away from scene center, radians.
AXIS_JITTER_RAD = math.radians(5.0)


@dataclass(frozen=True)
class SceneConfig:
    n_points: int = 10000
    cube_side: float = 10.0
    camera_distance: tuple[float, float] = (20.0, 50.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 4:
            raise ValueError("need at least four scene points")
        if self.cube_side <= 0:
            raise ValueError("cube side must be positive")
        lo, hi = self.camera_distance
        if not (0 < lo <= hi):
            raise ValueError("camera distance range must be positive and ordered")


@dataclass(frozen=True)
class Scene:
    points: np.ndarray
    config: SceneConfig


@dataclass(frozen=True)
class InstanceConfig:
    variant: str = "full4"  # full4 | mixed5 | mixed6 | two_view4
    noise_sigma: float = 0.0  # pixels
    inlier_ratio: float = 1.0
    n_correspondences: int | None = None
    focal: float | None = None  # scaled units; None means calibrated
    seed: int = 0
    #: Angular radius (degrees) of the viewing-direction cluster for cameras
    #: 2 and 3 around camera 1; None places all cameras independently.
    #: Clustered triplets mimic image sets that genuinely share points.
    camera_cluster_deg: float | None = None

    def __post_init__(self):
        if self.variant not in ("full4", "mixed5", "mixed6", "two_view4"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if not (0 < self.inlier_ratio <= 1):
            raise ValueError("inlier ratio must be in (0, 1]")
        if self.focal is not None and self.focal <= 0:
            raise ValueError("focal must be positive")
        if self.camera_cluster_deg is not None and self.camera_cluster_deg <= 0:
            raise ValueError("camera cluster radius must be positive")

    @property
    def px_per_unit(self) -> float:
        return NOMINAL_FOCAL_PX if self.focal is None else NOMINAL_IMAGE_PX

    @property
    def image_half_extent(self) -> float:
        """Half the virtual image side, in data units."""
        return 0.5 * NOMINAL_IMAGE_PX / self.px_per_unit


_VARIANT_POINTS = {"full4": 4, "mixed5": 5, "mixed6": 6, "two_view4": 4}


@dataclass(frozen=True)
class SyntheticInstance:
    """Projections of tracked points (all views) plus the ground truth."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray | None
    gt: TripletHypothesis | None
    gt_pose12: RelativePose
    config: InstanceConfig = field(repr=False)


def generate_scene(cfg: SceneConfig) -> Scene:
    rng = np.random.default_rng(cfg.seed)
    half = cfg.cube_side / 2.0
    pts = rng.uniform(-half, half, size=(cfg.n_points, 3))
    return Scene(pts, cfg)


def _direction_in_cap(rng, ref, cap_rad):
    """Uniform direction within the spherical cap of radius ``cap_rad``
    around ``ref``."""
    z = rng.uniform(math.cos(cap_rad), 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    pick = np.array([0.0, 0.0, 1.0]) if abs(ref[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(pick, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(ref, e1)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return z * ref + s * (math.cos(phi) * e1 + math.sin(phi) * e2)


def _random_camera(rng, dist_range, ref_direction=None, cap_rad=None):
    """World-to-camera (R, t): placed at a random distance, looking toward
    the origin with a small axis perturbation and a uniform roll. With a
    reference direction, the camera sits inside the given angular cap."""
    if ref_direction is None or cap_rad is None:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
    else:
        direction = _direction_in_cap(rng, ref_direction, cap_rad)
    C = direction * rng.uniform(dist_range[0], dist_range[1])

    z = -C / np.linalg.norm(C)  # optical axis toward the origin
    # Perturb the axis by at most AXIS_JITTER_RAD.
    perp = np.cross(z, rng.normal(size=3))
    n = np.linalg.norm(perp)
    if n > 1e-12:
        perp /= n
        ang = rng.uniform(0.0, AXIS_JITTER_RAD)
        z = math.cos(ang) * z + math.sin(ang) * perp
        z /= np.linalg.norm(z)
    # Roll around the axis.
    ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(ref, z)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(z, e1)
    roll = rng.uniform(0.0, 2.0 * math.pi)
    x_axis = math.cos(roll) * e1 + math.sin(roll) * e2
    y_axis = np.cross(z, x_axis)
    R = np.stack([x_axis, y_axis, z])
    t = -R @ C
    return R, t


def _relative(R1, t1, R2, t2) -> RelativePose:
    R12 = R2 @ R1.T
    t12 = t2 - R12 @ t1
    n = np.linalg.norm(t12)
    if n < 1e-12:
        raise DegenerateError("coincident camera centers")
    return RelativePose(R12, t12 / n)


def _project(R, t, X, focal):
    c = X @ R.T + t
    xy = c[:, :2] / c[:, 2:]
    if focal is not None:
        xy = focal * xy
    return xy, c[:, 2]


def make_triplet_instance(
    scene: Scene, cfg: InstanceConfig, rng, n_points: int | None = None
) -> SyntheticInstance:
    """Random cameras and a random point subset with every selected point in
    front of every required camera (re-sampled up to 1000 times, then
    DegenerateError("unviewable instance"))."""
    two_view = cfg.variant == "two_view4"
    n_cams = 2 if two_view else 3
    if n_points is None:
        n_points = cfg.n_correspondences or _VARIANT_POINTS[cfg.variant]

    cap = (
        math.radians(cfg.camera_cluster_deg)
        if cfg.camera_cluster_deg is not None
        else None
    )
    for _ in range(1000):
        first = _random_camera(rng, scene.config.camera_distance)
        ref = None
        if cap is not None:
            # Cluster later cameras around the first one's position direction.
            C1 = -first[0].T @ first[1]
            ref = C1 / np.linalg.norm(C1)
        cams = [first] + [
            _random_camera(rng, scene.config.camera_distance, ref, cap)
            for _ in range(n_cams - 1)
        ]
        idx = rng.choice(scene.points.shape[0], size=n_points, replace=False)
        X = scene.points[idx]
        views = []
        ok = True
        for R, t in cams:
            xy, depth = _project(R, t, X, cfg.focal)
            if np.any(depth <= 1e-6):
                ok = False
                break
            views.append(xy)
        if not ok:
            continue
        try:
            pose12 = _relative(*cams[0], *cams[1])
            pose13 = _relative(*cams[0], *cams[2]) if not two_view else None
        except DegenerateError:
            continue
        gt = (
            None
            if two_view
            else TripletHypothesis(pose12, pose13, focal=cfg.focal)
        )
        return SyntheticInstance(
            views[0],
            views[1],
            views[2] if not two_view else None,
            gt,
            pose12,
            cfg,
        )
    raise DegenerateError("unviewable instance")


def add_noise(instance: SyntheticInstance, sigma_px: float, rng) -> SyntheticInstance:
    """Per-coordinate i.i.d. Gaussian noise; sigma quoted in pixels and
    converted through the instance's pixel scale."""
    if sigma_px < 0:
        raise ValueError("noise sigma must be non-negative")
    if sigma_px == 0:
        return instance
    sigma = sigma_px / instance.config.px_per_unit
    views = []
    for v in (instance.x1, instance.x2, instance.x3):
        if v is None:
            views.append(None)
        else:
            views.append(v + rng.normal(0.0, sigma, size=v.shape))
    return SyntheticInstance(
        views[0], views[1], views[2], instance.gt, instance.gt_pose12, instance.config
    )


def inject_outliers(instance: SyntheticInstance, inlier_ratio: float, rng):
    """Replace views 2 and 3 of a uniformly chosen subset with uniform
    points in the virtual image bounds. Returns (instance, inlier_mask)."""
    if not (0 < inlier_ratio <= 1):
        raise ValueError("inlier ratio must be in (0, 1]")
    n = instance.x1.shape[0]
    n_out = int(round((1.0 - inlier_ratio) * n))
    mask = np.ones(n, dtype=bool)
    if n_out == 0:
        return instance, mask
    chosen = rng.choice(n, size=n_out, replace=False)
    mask[chosen] = False
    half = instance.config.image_half_extent
    x2 = instance.x2.copy()
    x2[chosen] = rng.uniform(-half, half, size=(n_out, 2))
    x3 = None
    if instance.x3 is not None:
        x3 = instance.x3.copy()
        x3[chosen] = rng.uniform(-half, half, size=(n_out, 2))
    out = SyntheticInstance(
        instance.x1, x2, x3, instance.gt, instance.gt_pose12, instance.config
    )
    return out, mask


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream for instance ``index`` of a run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
