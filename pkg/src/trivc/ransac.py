"""Hypothesis-and-test loop over three-view correspondences.

Plain RANSAC with a uniform seeded sampler: every hypothesis emitted by the
configured pipeline is scored by inlier count under the averaged two-pair
Sampson residual, ties broken by the inlier residual sum. An optional refit
step re-estimates both essential matrices from the winning inliers with the
normalized eight-point method and keeps the result only if it scores
better. No graph-cut or local-optimization stage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EstimationFailedError
from .geometry import (
    RelativePose,
    TripletHypothesis,
    essential_from_pose,
    project_to_essential,
)
from .pipelines import TripletSample, five_plus_p3p, six_plus_p3p, solve_4p3v, solve_4p3vf
from .pipelines import _decompose_batch


@dataclass(frozen=True)
class SolverSpec:
    solver_id: str
    sample_size: int
    focal: bool
    mode: str | None  # None for the chained baselines


SOLVERS = {
    s.solver_id: s
    for s in [
        SolverSpec("5pt+p3p", 5, False, None),
        SolverSpec("4p3v-m", 4, False, "m"),
        SolverSpec("4p3v-mdelta", 4, False, "mdelta"),
        SolverSpec("4p3v-l", 4, False, "l"),
        SolverSpec("4p3v-ldelta", 4, False, "ldelta"),
        SolverSpec("4p3v-ldeltainit", 4, False, "ldeltainit"),
        SolverSpec("4p3v-o", 4, False, "oracle"),
        SolverSpec("6pt+p3p", 6, True, None),
        SolverSpec("4p3vf-m", 4, True, "m"),
        SolverSpec("4p3vf-mdelta", 4, True, "mdelta"),
        SolverSpec("4p3vf-l", 4, True, "l"),
        SolverSpec("4p3vf-ldelta", 4, True, "ldelta"),
        SolverSpec("4p3vf-ldeltainit", 4, True, "ldeltainit"),
        SolverSpec("4p3vf-o", 4, True, "oracle"),
    ]
}


@dataclass(frozen=True)
class RansacConfig:
    solver_id: str
    max_iterations: int = 1000
    inlier_threshold: float = 3.0 / 1000.0  # data units; CLI converts from px
    seed: int = 0
    refit: bool = False
    delta_factor: float | None = None
    weights: object = None
    gt: TripletHypothesis | None = None
    p3p_select: bool = False
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self):
        if self.solver_id not in SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver_id!r}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.inlier_threshold <= 0:
            raise ConfigurationError("inlier threshold must be positive")


@dataclass
class RansacResult:
    best: TripletHypothesis
    inlier_mask: np.ndarray
    score: int
    iterations_run: int
    wall_time: float
    refit_used: bool = False
    checkpoint_bests: list = field(default_factory=list)


def run_pipeline(sample: TripletSample, cfg: RansacConfig):
    """Hypotheses for one minimal sample under the configured solver."""
    spec = SOLVERS[cfg.solver_id]
    if spec.mode is None:
        return five_plus_p3p(sample) if not spec.focal else six_plus_p3p(sample)
    if spec.focal:
        return solve_4p3vf(
            sample, spec.mode, delta_factor=cfg.delta_factor,
            weights=cfg.weights, gt=cfg.gt,
        )
    return solve_4p3v(
        sample, spec.mode, delta_factor=cfg.delta_factor,
        weights=cfg.weights, gt=cfg.gt, p3p_select=cfg.p3p_select,
    )


def make_sample(spec: SolverSpec, x1, x2, x3) -> TripletSample:
    variant = {4: "full4", 5: "mixed5", 6: "mixed6"}[spec.sample_size]
    k = 4 if variant == "full4" else 3
    return TripletSample(variant, x1, x2, x3[:k])


def triplet_residual(h: TripletHypothesis, x1, x2, x3) -> float:
    """Mean of the two Sampson errors of one 3-view correspondence; points
    are divided by the hypothesis focal when one is present."""
    r = triplet_residuals([h], np.atleast_2d(x1), np.atleast_2d(x2), np.atleast_2d(x3))
    return float(r[0, 0])


def _homogeneous(x):
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def _sampson_batch(Es, p1, p2):
    """Sampson errors for stacked models: Es (h, 3, 3), p1/p2 (h, n, 3) or
    (n, 3). Returns (h, n) with inf where the gradient vanishes."""
    if p1.ndim == 2:
        Ex1 = np.einsum("hij,nj->hni", Es, p1)
        num = np.abs(np.einsum("ni,hni->hn", p2, Ex1))
        Etx2 = np.einsum("hji,nj->hni", Es, p2)
    else:
        Ex1 = np.einsum("hij,hnj->hni", Es, p1)
        num = np.abs(np.einsum("hni,hni->hn", p2, Ex1))
        Etx2 = np.einsum("hji,hnj->hni", Es, p2)
    den_sq = Ex1[..., 0] ** 2 + Ex1[..., 1] ** 2 + Etx2[..., 0] ** 2 + Etx2[..., 1] ** 2
    out = np.full(num.shape, np.inf)
    ok = den_sq >= 1e-30
    out[ok] = num[ok] / np.sqrt(den_sq[ok])
    return out


def triplet_residuals(hyps, x1, x2, x3):
    """(h, n) residual matrix for a hypothesis list over all
    correspondences."""
    E12 = np.stack([essential_from_pose(h.pose12) for h in hyps])
    E13 = np.stack([essential_from_pose(h.pose13) for h in hyps])
    focals = np.array([h.focal if h.focal is not None else 1.0 for h in hyps])
    if np.all(focals == 1.0):
        p1 = _homogeneous(x1)
        p2 = _homogeneous(x2)
        p3 = _homogeneous(x3)
    else:
        ones = np.ones((len(hyps), x1.shape[0], 1))
        f = focals[:, None, None]
        p1 = np.concatenate([x1[None] / f, ones], axis=2)
        p2 = np.concatenate([x2[None] / f, ones], axis=2)
        p3 = np.concatenate([x3[None] / f, ones], axis=2)
    return 0.5 * (_sampson_batch(E12, p1, p2) + _sampson_batch(E13, p1, p3))


def _effective_thresholds(hyps, threshold):
    """Inlier threshold per hypothesis: data-unit threshold divided by the
    hypothesis focal (residuals of focal models live in normalized units)."""
    f = np.array([h.focal if h.focal is not None else 1.0 for h in hyps])
    return threshold / f


def _eight_point(x1, x2):
    """Normalized eight-point estimate projected onto the essential
    manifold."""
    def normalizer(x):
        c = x.mean(axis=0)
        d = np.sqrt(((x - c) ** 2).sum(axis=1)).mean()
        s = np.sqrt(2.0) / max(d, 1e-12)
        T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
        return T

    T1 = normalizer(x1)
    T2 = normalizer(x2)
    p1 = _homogeneous(x1) @ T1.T
    p2 = _homogeneous(x2) @ T2.T
    rows = np.einsum("ni,nj->nij", p2, p1).reshape(-1, 9)
    _, _, Vt = np.linalg.svd(rows)
    F = Vt[-1].reshape(3, 3)
    E = T2.T @ F @ T1
    return project_to_essential(E)


def _refit(best: TripletHypothesis, mask, x1, x2, x3):
    """Eight-point refit of both pairs on the inliers; None when the inlier
    set is too small or the refit degenerates."""
    idx = np.flatnonzero(mask)
    if idx.size < 8:
        return None
    f = best.focal if best.focal is not None else 1.0
    a1, a2, a3 = x1[idx] / f, x2[idx] / f, x3[idx] / f
    try:
        E12 = _eight_point(a1, a2)
        E13 = _eight_point(a1, a3)
        pose12 = _decompose_batch(E12[None], a1, a2)[0]
        pose13 = _decompose_batch(E13[None], a1, a3)[0]
    except np.linalg.LinAlgError:
        return None
    if pose12 is None or pose13 is None:
        return None
    return TripletHypothesis(pose12, pose13, focal=best.focal)


def run_ransac(data, cfg: RansacConfig) -> RansacResult:
    """data: (x1, x2, x3) arrays of shape (n, 2) in matching row order."""
    t_start = time.perf_counter()
    x1, x2, x3 = (np.asarray(a, dtype=np.float64) for a in data)
    n = x1.shape[0]
    spec = SOLVERS[cfg.solver_id]
    if n < spec.sample_size:
        raise ConfigurationError(
            f"{cfg.solver_id} needs at least {spec.sample_size} correspondences, got {n}"
        )

    rng = np.random.default_rng(cfg.seed)
    checkpoints = sorted(set(int(c) for c in cfg.checkpoints))
    checkpoint_bests = []

    best = None
    best_key = (-1, 0.0)  # (score, -inlier residual sum)
    best_mask = None

    for it in range(1, cfg.max_iterations + 1):
        idx = rng.choice(n, size=spec.sample_size, replace=False)
        sample = make_sample(spec, x1[idx], x2[idx], x3[idx])
        hyps = run_pipeline(sample, cfg)
        if hyps:
            res = triplet_residuals(hyps, x1, x2, x3)
            thr = _effective_thresholds(hyps, cfg.inlier_threshold)
            inl = res < thr[:, None]
            counts = inl.sum(axis=1)
            rsums = np.where(inl, res, 0.0).sum(axis=1)
            for h in range(len(hyps)):
                key = (int(counts[h]), -float(rsums[h]))
                if key > best_key:
                    best_key = key
                    best = hyps[h]
                    best_mask = inl[h]
        if checkpoints and it == checkpoints[0]:
            checkpoints.pop(0)
            checkpoint_bests.append((it, best, best_key[0]))

    if best is None:
        raise EstimationFailedError("estimation failed: no hypothesis produced")

    refit_used = False
    if cfg.refit:
        cand = _refit(best, best_mask, x1, x2, x3)
        if cand is not None:
            res = triplet_residuals([cand], x1, x2, x3)[0]
            thr = _effective_thresholds([cand], cfg.inlier_threshold)[0]
            inl = res < thr
            key = (int(inl.sum()), -float(np.where(inl, res, 0.0).sum()))
            if key > best_key:
                best = cand
                best_key = key
                best_mask = inl
                refit_used = True

    return RansacResult(
        best=best,
        inlier_mask=best_mask,
        score=int(best_key[0]),
        iterations_run=cfg.max_iterations,
        wall_time=time.perf_counter() - t_start,
        refit_used=refit_used,
        checkpoint_bests=checkpoint_bests,
    )
