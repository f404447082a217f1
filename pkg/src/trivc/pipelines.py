"""Composed three-view solvers.

Baselines chain a two-view minimal solver with P3P registration of the
third camera: 5pt+P3P on the (5_3, 5_3, 3_3) configuration and 6pt+P3P on
(6_3, 6_3, 3_3). The four-point solvers synthesize virtual correspondences
(mean point, hedged shifts, learned prediction, or ground-truth oracle) to
reach the 5/6 correspondences those baselines need, from a (4_4, 4_4, 4_4)
sample.

World coordinates are camera-1 coordinates throughout, so P3P's absolute
pose of view 3 is the relative pose 1->3 directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ConfigurationError
from .geometry import RelativePose, TripletHypothesis, essential_from_pose
from .predictor import PredictorWeights, predict_virtual_point
from .solvers.five_point import solve_5pt
from .solvers.six_point import solve_6pt_focal
from .solvers.p3p import solve_p3p
from . import virtual

DELTA_FACTOR_MEAN = 0.15
DELTA_FACTOR_LEARNED = 0.10

_VARIANT_COUNTS = {"full4": (4, 4), "mixed5": (5, 3), "mixed6": (6, 3)}


@dataclass(frozen=True)
class TripletSample:
    """Observations of tracked points in three views. The first
    ``x3.shape[0]`` points are visible in view 3; the rest only in views
    1-2."""

    variant: str
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    def __post_init__(self):
        if self.variant not in _VARIANT_COUNTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        n, k = _VARIANT_COUNTS[self.variant]
        x1 = np.asarray(self.x1, dtype=np.float64)
        x2 = np.asarray(self.x2, dtype=np.float64)
        x3 = np.asarray(self.x3, dtype=np.float64)
        if x1.shape != (n, 2) or x2.shape != (n, 2) or x3.shape != (k, 2):
            raise ValueError(
                f"variant {self.variant}: expected shapes ({n},2)/({n},2)/({k},2)"
            )
        if not all(np.all(np.isfinite(a)) for a in (x1, x2, x3)):
            raise ValueError("sample contains non-finite points")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "x3", x3)


_W_DEC = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _decompose_batch(Es, x1, x2):
    """Cheirality-best (R, t) per essential matrix, batched.

    Es: (m, 3, 3); x1, x2: (n, 2) support correspondences. Returns a list of
    RelativePose or None (when no candidate passes cheirality).
    """
    Es = np.asarray(Es)
    m = Es.shape[0]
    U, _, Vt = np.linalg.svd(Es)
    negU = np.linalg.det(U) < 0
    U[negU] = -U[negU]
    negV = np.linalg.det(Vt) < 0
    Vt[negV] = -Vt[negV]
    Ra = U @ _W_DEC @ Vt
    Rb = U @ _W_DEC.T @ Vt
    ts = U[:, :, 2]

    p1 = np.concatenate([x1, np.ones((x1.shape[0], 1))], axis=1)
    p2 = np.concatenate([x2, np.ones((x2.shape[0], 1))], axis=1)

    # Depth signs for all 4 candidates at once: candidates (m, 4).
    Rs = np.stack([Ra, Ra, Rb, Rb], axis=1)  # (m, 4, 3, 3)
    tt = np.stack([ts, -ts, ts, -ts], axis=1)  # (m, 4, 3)
    a = np.einsum("mcij,nj->mcni", Rs, p1)  # R @ x1h
    b = p2[None, None, :, :]
    aa = np.einsum("mcni,mcni->mcn", a, a)
    ab = np.einsum("mcni,ni->mcn", a, p2)
    bb = np.einsum("ni,ni->n", p2, p2)[None, None, :]
    at = np.einsum("mcni,mci->mcn", a, tt)
    bt = np.einsum("ni,mci->mcn", p2, tt)
    det = aa * bb - ab * ab
    with np.errstate(all="ignore"):
        l1 = (-at * bb + ab * bt) / det
        l2 = (-at * ab + aa * bt) / det
        front = (l1 > 0) & (l2 > 0) & (np.abs(det) > 1e-18)
    counts = front.sum(axis=2)  # (m, 4)
    best = np.argmax(counts, axis=1)

    out = []
    for i in range(m):
        if counts[i, best[i]] == 0:
            out.append(None)
            continue
        c = best[i]
        out.append(RelativePose(Rs[i, c], tt[i, c] / np.linalg.norm(tt[i, c])))
    return out


def _triangulate_rows(pose: RelativePose, x1, x2):
    """DLT triangulation of several correspondences under one pose; one
    batched SVD. Returns (k, 3) camera-1-frame points (np.nan rows when the
    linear system degenerates)."""
    R, t = pose.rotation, pose.translation
    k = x1.shape[0]
    P2 = np.concatenate([R, t[:, None]], axis=1)
    A = np.zeros((k, 4, 4))
    A[:, 0, 0] = -1.0
    A[:, 0, 2] = x1[:, 0]
    A[:, 1, 1] = -1.0
    A[:, 1, 2] = x1[:, 1]
    A[:, 2] = x2[:, 0, None] * P2[2] - P2[0]
    A[:, 3] = x2[:, 1, None] * P2[2] - P2[1]
    _, _, Vt = np.linalg.svd(A)
    Xh = Vt[:, -1, :]
    with np.errstate(all="ignore"):
        X = Xh[:, :3] / Xh[:, 3:]
    return X


def _register_view3(pose12, x1, x2, x3, tri_idx):
    """Triangulate the points ``tri_idx`` and register view 3 with P3P;
    ``x3`` holds the three view-3 observations of those points. Returns the
    pose13 candidates (unit translation)."""
    tri_idx = list(tri_idx)
    world = _triangulate_rows(pose12, x1[tri_idx], x2[tri_idx])
    if not np.all(np.isfinite(world)):
        return []
    try:
        poses = solve_p3p(world, x3)
    except DegenerateError:
        return []
    out = []
    for R, t in poses:
        n = np.linalg.norm(t)
        if n < 1e-12:
            continue
        out.append(RelativePose(R, t / n))
    return out


def _select_by_fourth(pose12, poses13, x1, x2, x3_full, fourth):
    """Keep only the pose13 minimizing the view-3 reprojection of the
    reserved fourth point (optional ablation mode)."""
    if len(poses13) <= 1:
        return poses13
    world = _triangulate_rows(pose12, x1[[fourth]], x2[[fourth]])
    if not np.all(np.isfinite(world)):
        return poses13
    X = world[0]
    best = None
    best_err = np.inf
    for pose in poses13:
        c = pose.rotation @ X + pose.translation
        if c[2] <= 1e-12:
            continue
        err = float(np.hypot(c[0] / c[2] - x3_full[fourth, 0], c[1] / c[2] - x3_full[fourth, 1]))
        if err < best_err:
            best_err = err
            best = pose
    return [best] if best is not None else poses13


def five_plus_p3p(sample: TripletSample):
    """Baseline for the (5_3, 5_3, 3_3) configuration."""
    if sample.variant != "mixed5":
        raise ConfigurationError("five_plus_p3p needs a mixed5 sample")
    return _five_point_stage(
        sample.x1, sample.x2, sample.x3, supports=None, tri_idx=(0, 1, 2)
    )


def _five_point_stage(x1, x2, x3, supports, tri_idx, select_fourth=None):
    """Run 5pt on (x1, x2), decompose with the given supports (defaults to
    all pairs), then register view 3 on the points ``tri_idx``."""
    try:
        Es = solve_5pt(x1, x2)
    except DegenerateError:
        return []
    if not Es:
        return []
    sup1, sup2 = (x1, x2) if supports is None else supports
    poses12 = _decompose_batch(np.stack(Es), sup1, sup2)
    hyps = []
    tri_idx = list(tri_idx)
    for pose12 in poses12:
        if pose12 is None:
            continue
        poses13 = _register_view3(pose12, sup1, sup2, x3, tri_idx)
        if select_fourth is not None:
            poses13 = _select_by_fourth(
                pose12, poses13, sup1, sup2, select_fourth[0], select_fourth[1]
            )
        for pose13 in poses13:
            hyps.append(TripletHypothesis(pose12, pose13))
    return hyps


def six_plus_p3p(sample: TripletSample):
    """Baseline for the (6_3, 6_3, 3_3) configuration with shared unknown
    focal length; sample coordinates are in (scaled) pixel units."""
    if sample.variant != "mixed6":
        raise ConfigurationError("six_plus_p3p needs a mixed6 sample")
    return _six_point_stage(sample.x1, sample.x2, sample.x3, supports=None)


def _six_point_stage(x1, x2, x3, supports):
    try:
        cands = solve_6pt_focal(x1, x2)
    except DegenerateError:
        return []
    hyps = []
    for E, f in cands:
        sup1, sup2 = (x1, x2) if supports is None else supports
        pose12_list = _decompose_batch(E[None], sup1 / f, sup2 / f)
        pose12 = pose12_list[0]
        if pose12 is None:
            continue
        poses13 = _register_view3(
            pose12, sup1 / f, sup2 / f, x3 / f, (0, 1, 2)
        )
        for pose13 in poses13:
            hyps.append(TripletHypothesis(pose12, pose13, focal=f))
    return hyps


def _triplet_with_fallback(sample_x2, prefer=(0, 1, 2), fallback=(0, 1, 3)):
    """Pick the virtual-point triplet, falling back when the preferred
    view-2 triangle is degenerate. Returns (triplet, reserved) or None."""
    for tri in (prefer, fallback):
        ext = sample_x2[list(tri)].max(axis=0) - sample_x2[list(tri)].min(axis=0)
        if ext.max() > 1e-12:
            reserved = ({0, 1, 2, 3} - set(tri)).pop()
            return list(tri), reserved
    return None


def _largest_area_triplet(x2):
    """Optional alternative: the point triplet spanning the largest view-2
    triangle."""
    best = None
    best_area = -1.0
    for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = x2[list(tri)]
        area = abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0])
        if area > best_area:
            best_area = area
            best = tri
    if best_area <= 1e-12:
        return None
    reserved = ({0, 1, 2, 3} - set(best)).pop()
    return list(best), reserved


def _oracle_vc(gt: TripletHypothesis, x1, x2, tri):
    """GT-consistent virtual correspondence; with a focal hypothesis the
    epipolar geometry lives in pixel units (fundamental matrix)."""
    m1 = virtual.mean_point(x1[tri])
    m2 = virtual.mean_point(x2[tri])
    E = essential_from_pose(gt.pose12)
    if gt.focal is not None:
        kinv = np.array([1.0 / gt.focal, 1.0 / gt.focal, 1.0])
        E = kinv[:, None] * E * kinv[None, :]
    p2 = virtual.project_onto_epipolar_line(E, m1, m2)
    return virtual.VirtualCorrespondence(m1, p2, "oracle")


def _virtual_points_4p3v(x1, x2, x3, mode, tri, reserved, *, delta_factor,
                         weights, gt):
    """The virtual correspondences for one 4p3v-style draw (1 or 3)."""
    tri1 = x1[tri]
    tri2 = x2[tri]
    if mode == "m":
        return [virtual.mean_correspondence(tri1, tri2)]
    if mode == "mdelta":
        base = virtual.mean_correspondence(tri1, tri2)
        plus, minus = virtual.delta_shifts(base.p2, tri2, delta_factor)
        return [
            base,
            virtual.VirtualCorrespondence(base.p1, plus, "delta_plus"),
            virtual.VirtualCorrespondence(base.p1, minus, "delta_minus"),
        ]
    if mode == "oracle":
        if gt is None:
            raise ConfigurationError("oracle mode needs the ground-truth hypothesis")
        return [_oracle_vc(gt, x1, x2, tri)]

    if weights is None:
        raise ConfigurationError("learned modes need predictor weights")
    order = tri + [reserved]
    corr = np.stack([x1[order], x2[order], x3[order]], axis=1)  # (4, 3, 2)
    if mode == "l":
        return [predict_virtual_point(weights, corr)]
    if mode == "ldelta":
        vc = predict_virtual_point(weights, corr)
        plus, minus = virtual.delta_shifts(vc.p2, tri2, delta_factor)
        return [
            vc,
            virtual.VirtualCorrespondence(vc.p1, plus, "delta_plus"),
            virtual.VirtualCorrespondence(vc.p1, minus, "delta_minus"),
        ]
    if mode == "ldeltainit":
        m2 = virtual.mean_point(tri2)
        plus, minus = virtual.delta_shifts(m2, tri2, delta_factor)
        return [
            predict_virtual_point(weights, corr, init2=init)
            for init in (m2, plus, minus)
        ]
    raise ConfigurationError(f"unknown 4p3v mode {mode!r}")


def solve_4p3v(sample: TripletSample, mode: str, *, delta_factor=None,
               weights: PredictorWeights | None = None,
               gt: TripletHypothesis | None = None,
               p3p_select: bool = False,
               use_max_area_triplet: bool = False):
    """Three-view hypotheses from a full four-point sample.

    mode: one of m, mdelta, l, ldelta, ldeltainit, oracle. Delta modes run
    the five-point stage three times (base and the two hedged shifts); the
    others once. Cheirality and triangulation use only the four real
    correspondences.
    """
    if sample.variant != "full4":
        raise ConfigurationError("solve_4p3v needs a full4 sample")
    if delta_factor is None:
        delta_factor = DELTA_FACTOR_LEARNED if mode.startswith("l") else DELTA_FACTOR_MEAN
    x1, x2, x3 = sample.x1, sample.x2, sample.x3

    pick = (
        _largest_area_triplet(x2)
        if use_max_area_triplet
        else _triplet_with_fallback(x2)
    )
    if pick is None:
        return []
    tri, reserved = pick
    try:
        vcs = _virtual_points_4p3v(
            x1, x2, x3, mode, tri, reserved,
            delta_factor=delta_factor, weights=weights, gt=gt,
        )
    except DegenerateError:
        return []

    hyps = []
    for vc in vcs:
        five1 = np.concatenate([x1, vc.p1[None]], axis=0)
        five2 = np.concatenate([x2, vc.p2[None]], axis=0)
        hyps.extend(
            _five_point_stage(
                five1, five2, x3[tri], supports=(x1, x2), tri_idx=tri,
                select_fourth=((x3, reserved) if p3p_select else None),
            )
        )
    return hyps


def solve_4p3vf(sample: TripletSample, mode: str, *, delta_factor=None,
                weights: PredictorWeights | None = None,
                gt: TripletHypothesis | None = None):
    """Three-view-plus-focal hypotheses from a full four-point sample.

    Two virtual correspondences (triplets {0,1,2} and {0,1,3}) lift the
    sample to the six pairs the focal solver needs. Delta modes hedge only
    the first virtual point, so the six-point stage runs three times.
    """
    if sample.variant != "full4":
        raise ConfigurationError("solve_4p3vf needs a full4 sample")
    if delta_factor is None:
        delta_factor = DELTA_FACTOR_LEARNED if mode.startswith("l") else DELTA_FACTOR_MEAN
    x1, x2, x3 = sample.x1, sample.x2, sample.x3

    tri_a, res_a = [0, 1, 2], 3
    tri_b, res_b = [0, 1, 3], 2
    ext_a = x2[tri_a].max(axis=0) - x2[tri_a].min(axis=0)
    ext_b = x2[tri_b].max(axis=0) - x2[tri_b].min(axis=0)
    if ext_a.max() <= 1e-12 or ext_b.max() <= 1e-12:
        return []

    try:
        firsts = _virtual_points_4p3v(
            x1, x2, x3, mode, tri_a, res_a,
            delta_factor=delta_factor, weights=weights, gt=gt,
        )
        second_mode = {"mdelta": "m", "ldelta": "l", "ldeltainit": "l"}.get(mode, mode)
        (second,) = _virtual_points_4p3v(
            x1, x2, x3, second_mode, tri_b, res_b,
            delta_factor=delta_factor, weights=weights, gt=gt,
        )
    except DegenerateError:
        return []

    hyps = []
    for vc in firsts:
        six1 = np.concatenate([x1, vc.p1[None], second.p1[None]], axis=0)
        six2 = np.concatenate([x2, vc.p2[None], second.p2[None]], axis=0)
        try:
            cands = solve_6pt_focal(six1, six2)
        except DegenerateError:
            continue
        for E, f in cands:
            pose12 = _decompose_batch(E[None], x1 / f, x2 / f)[0]
            if pose12 is None:
                continue
            poses13 = _register_view3(pose12, x1 / f, x2 / f, x3[tri_a] / f, tri_a)
            for pose13 in poses13:
                hyps.append(TripletHypothesis(pose12, pose13, focal=f))
    return hyps


def solve_4p_twoview(x1, x2, mode: str, *, delta_factor=DELTA_FACTOR_MEAN,
                     gt_pose12: RelativePose | None = None):
    """Two-view analogue: relative poses 1->2 from four correspondences and
    one synthesized fifth. mode: m, mdelta, or oracle."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != (4, 2) or x2.shape != (4, 2):
        raise ConfigurationError("solve_4p_twoview needs four correspondences")

    pick = _triplet_with_fallback(x2)
    if pick is None:
        return []
    tri, _reserved = pick
    tri1, tri2 = x1[tri], x2[tri]
    if mode == "m":
        vcs = [virtual.mean_correspondence(tri1, tri2)]
    elif mode == "mdelta":
        base = virtual.mean_correspondence(tri1, tri2)
        try:
            plus, minus = virtual.delta_shifts(base.p2, tri2, delta_factor)
        except DegenerateError:
            return []
        vcs = [
            base,
            virtual.VirtualCorrespondence(base.p1, plus, "delta_plus"),
            virtual.VirtualCorrespondence(base.p1, minus, "delta_minus"),
        ]
    elif mode == "oracle":
        if gt_pose12 is None:
            raise ConfigurationError("oracle mode needs the ground-truth pose")
        m1 = virtual.mean_point(tri1)
        m2 = virtual.mean_point(tri2)
        E = essential_from_pose(gt_pose12)
        p2 = virtual.project_onto_epipolar_line(E, m1, m2)
        vcs = [virtual.VirtualCorrespondence(m1, p2, "oracle")]
    else:
        raise ConfigurationError(f"unknown 4p mode {mode!r}")

    poses = []
    for vc in vcs:
        five1 = np.concatenate([x1, vc.p1[None]], axis=0)
        five2 = np.concatenate([x2, vc.p2[None]], axis=0)
        try:
            Es = solve_5pt(five1, five2)
        except DegenerateError:
            continue
        if not Es:
            continue
        for pose in _decompose_batch(np.stack(Es), x1, x2):
            if pose is not None:
                poses.append(pose)
    return poses
