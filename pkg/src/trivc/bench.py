"""Experiment drivers behind the CLI: barycentric sweep, noise curves,
outlier convergence, and solver timing.

Every driver is a pure function of its parameters; all randomness flows
through per-instance seeded streams, and parallel execution (``jobs``)
changes scheduling only, never results: reductions always run in instance
order. Timing columns are filled only when explicitly requested, so output
files are byte-deterministic by default.
"""

from __future__ import annotations

import hashlib
import time
from functools import lru_cache
from multiprocessing import get_context

import numpy as np

from .errors import EstimationFailedError
from .geometry import TripletHypothesis
from .io import fmt
from .metrics import rotation_error, translation_angle_error, triplet_pose_error
from .pipelines import TripletSample, solve_4p_twoview
from .predictor import load_weights
from .ransac import SOLVERS, RansacConfig, run_pipeline, run_ransac
from .synth import (
    InstanceConfig,
    SceneConfig,
    add_noise,
    generate_scene,
    inject_outliers,
    instance_rng,
    make_triplet_instance,
)
from . import virtual

#: Viewing-direction cluster radius (degrees) used by the noise, outlier,
#: and timing benchmarks; image triplets that share points come from nearby
#: viewpoints, unlike the unconstrained placement of the barycentric sweep.
DEFAULT_CLUSTER_DEG = 15.0

TWO_VIEW_SOLVERS = {"4p-m": "m", "4p-mdelta": "mdelta", "4p-o": "oracle"}

MISSING_ERROR_DEG = 180.0  # pose error charged when no hypothesis exists yet


@lru_cache(maxsize=4)
def _weights_cached(path):
    return load_weights(path)


def _run_blocks(worker, blocks, jobs):
    """Map ``worker`` over argument blocks, in order, optionally with a
    process pool."""
    if jobs <= 1:
        return [worker(b) for b in blocks]
    ctx = get_context("fork")
    with ctx.Pool(processes=jobs) as pool:
        return pool.map(worker, blocks)


# --------------------------------------------------------------------------
# Barycentric sweep (mean-point validation)

_SWEEP_BLOCK = 250


def _sweep_block(args):
    seed, start, count, grid = args
    sums = np.zeros(grid.shape[0])
    valid = np.zeros(grid.shape[0])
    from .geometry import essential_from_pose
    from .synth import _random_camera, _relative

    for i in range(start, start + count):
        rng = instance_rng(seed, i)
        scene_pts = rng.uniform(-5.0, 5.0, size=(3, 3))
        cams = None
        for _ in range(1000):
            c1 = _random_camera(rng, (20.0, 50.0))
            c2 = _random_camera(rng, (20.0, 50.0))
            d1 = scene_pts @ c1[0].T + c1[1]
            d2 = scene_pts @ c2[0].T + c2[1]
            if np.all(d1[:, 2] > 1e-6) and np.all(d2[:, 2] > 1e-6):
                cams = (c1, c2)
                break
        if cams is None:
            continue
        pose12 = _relative(*cams[0], *cams[1])
        tri1 = d1[:, :2] / d1[:, 2:]
        tri2 = d2[:, :2] / d2[:, 2:]
        E = essential_from_pose(pose12)
        m1 = tri1.mean(axis=0)
        pts2 = grid @ tri2  # (cells, 2)

        line = E @ np.array([m1[0], m1[1], 1.0])
        n2 = np.hypot(line[0], line[1])
        d_img2 = np.abs(pts2 @ line[:2] + line[2]) / max(n2, 1e-300)
        lines1 = np.concatenate([pts2, np.ones((pts2.shape[0], 1))], axis=1) @ E
        n1 = np.hypot(lines1[:, 0], lines1[:, 1])
        d_img1 = np.abs(lines1[:, :2] @ m1 + lines1[:, 2]) / np.maximum(n1, 1e-300)
        sums += 0.5 * (d_img1 + d_img2)
        valid += 1.0
    return sums, valid


def fit_gaussian_mean(grid, mean_err):
    """Least-squares log-Gaussian fit of the (inverted) error surface;
    returns the fitted mean (a, b)."""
    w = mean_err.max() - mean_err
    top = w.max()
    if top <= 0:
        return float("nan"), float("nan")
    lw = np.log(w / top + 1e-6)
    a = grid[:, 0]
    b = grid[:, 1]
    design = np.stack([np.ones_like(a), a, b, a * a, a * b, b * b], axis=1)
    coef, *_ = np.linalg.lstsq(design, lw, rcond=None)
    H = np.array([[2 * coef[3], coef[4]], [coef[4], 2 * coef[5]]])
    try:
        mu = np.linalg.solve(H, -coef[1:3])
    except np.linalg.LinAlgError:
        return float("nan"), float("nan")
    return float(mu[0]), float(mu[1])


def sweep_barycentric(n_scenes, grid_n=19, seed=0, jobs=1):
    """Average symmetric epipolar error of barycentric candidate points in
    view 2 against the view-1 mean point. Returns (columns, rows, meta)."""
    grid = virtual.barycentric_grid(grid_n)
    blocks = []
    start = 0
    while start < n_scenes:
        count = min(_SWEEP_BLOCK, n_scenes - start)
        blocks.append((seed, start, count, grid))
        start += count
    parts = _run_blocks(_sweep_block, blocks, jobs)
    sums = np.zeros(grid.shape[0])
    valid = np.zeros(grid.shape[0])
    for s, v in parts:  # fixed block order keeps the reduction deterministic
        sums += s
        valid += v
    mean_err = sums / np.maximum(valid, 1.0)
    mu_a, mu_b = fit_gaussian_mean(grid, mean_err)
    argmin = int(np.argmin(mean_err))

    columns = ["a", "b", "mean_symmetric_epipolar_error"]
    rows = [
        (fmt(grid[i, 0]), fmt(grid[i, 1]), fmt(mean_err[i]))
        for i in range(grid.shape[0])
    ]
    meta = {
        "gaussian_mean_a": mu_a,
        "gaussian_mean_b": mu_b,
        "argmin_a": float(grid[argmin, 0]),
        "argmin_b": float(grid[argmin, 1]),
        "n_scenes": n_scenes,
    }
    return columns, rows, meta


# --------------------------------------------------------------------------
# Noise curves (bare pipelines, best hypothesis against ground truth)

NOISE_COLUMNS = [
    "experiment", "solver", "seed", "instance", "noise_sigma_px",
    "inlier_ratio", "iterations", "pose_error_deg", "rot12_deg", "rot13_deg",
    "t12_deg", "t13_deg", "focal_error_rel", "solver_time_us", "ransac_time_ms",
]


def _best_against_gt(hyps, gt):
    """Best hypothesis errors against ground truth (boxplot protocol)."""
    best = None
    best_err = np.inf
    for h in hyps:
        e = triplet_pose_error(h, gt)
        if e < best_err:
            best_err = e
            best = h
    if best is None:
        return None
    return {
        "pose": best_err,
        "rot12": rotation_error(best.pose12.rotation, gt.pose12.rotation),
        "rot13": rotation_error(best.pose13.rotation, gt.pose13.rotation),
        "t12": translation_angle_error(best.pose12.translation, gt.pose12.translation),
        "t13": translation_angle_error(best.pose13.translation, gt.pose13.translation),
        "focal": (
            abs(best.focal - gt.focal) / gt.focal
            if best.focal is not None and gt.focal
            else None
        ),
    }


def _noise_cell(solver_id, inst, sigma, seed, index, sigma_idx, weights_path,
                delta_factor, with_timing):
    """One (solver, sigma, instance) evaluation."""
    noise_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(index, 101, sigma_idx))
    )
    noisy = add_noise(inst, sigma, noise_rng)

    if solver_id in TWO_VIEW_SOLVERS:
        mode = TWO_VIEW_SOLVERS[solver_id]
        t0 = time.perf_counter()
        poses = solve_4p_twoview(
            noisy.x1[:4], noisy.x2[:4], mode, gt_pose12=inst.gt_pose12
        )
        dt = time.perf_counter() - t0
        best = None
        best_err = np.inf
        for p in poses:
            e = max(
                rotation_error(p.rotation, inst.gt_pose12.rotation),
                translation_angle_error(p.translation, inst.gt_pose12.translation),
            )
            if e < best_err:
                best_err, best = e, p
        if best is None:
            return None, dt
        return {
            "pose": best_err,
            "rot12": rotation_error(best.rotation, inst.gt_pose12.rotation),
            "rot13": None,
            "t12": translation_angle_error(best.translation, inst.gt_pose12.translation),
            "t13": None,
            "focal": None,
        }, dt

    spec = SOLVERS[solver_id]
    k = 4 if spec.sample_size == 4 else 3
    variant = {4: "full4", 5: "mixed5", 6: "mixed6"}[spec.sample_size]
    sample = TripletSample(
        variant,
        noisy.x1[: spec.sample_size],
        noisy.x2[: spec.sample_size],
        noisy.x3[:k],
    )
    cfg = RansacConfig(
        solver_id=solver_id,
        seed=0,
        gt=inst.gt,
        weights=_weights_cached(weights_path) if weights_path else None,
        delta_factor=delta_factor,
    )
    t0 = time.perf_counter()
    hyps = run_pipeline(sample, cfg)
    dt = time.perf_counter() - t0
    return _best_against_gt(hyps, inst.gt), dt


def _noise_instance_worker(args):
    (seed, index, solvers, sigmas, cluster_deg, weights_path, delta_factor,
     with_timing) = args
    scene = generate_scene(SceneConfig(seed=seed))
    rows = []
    needs_focal = any(SOLVERS[s].focal for s in solvers if s in SOLVERS)
    needs_calibrated = any(
        (s in TWO_VIEW_SOLVERS) or (s in SOLVERS and not SOLVERS[s].focal)
        for s in solvers
    )
    insts = {}
    if needs_calibrated:
        rng = instance_rng(seed, index)
        insts[False] = make_triplet_instance(
            scene,
            InstanceConfig(variant="mixed6", camera_cluster_deg=cluster_deg),
            rng,
            n_points=6,
        )
    if needs_focal:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(index, 7))
        )
        insts[True] = make_triplet_instance(
            scene,
            InstanceConfig(variant="mixed6", focal=1.2, camera_cluster_deg=cluster_deg),
            rng,
            n_points=6,
        )
    for solver_id in solvers:
        focal = solver_id in SOLVERS and SOLVERS[solver_id].focal
        inst = insts[bool(focal)] if not (solver_id in TWO_VIEW_SOLVERS) else insts[False]
        for sigma_idx, sigma in enumerate(sigmas):
            best, dt = _noise_cell(
                solver_id, inst, sigma, seed, index, sigma_idx, weights_path,
                delta_factor, with_timing,
            )
            if best is None:
                vals = dict(pose="inf", rot12="", rot13="", t12="", t13="", focal="")
            else:
                vals = {
                    "pose": fmt(best["pose"]),
                    "rot12": fmt(best["rot12"]),
                    "rot13": "" if best["rot13"] is None else fmt(best["rot13"]),
                    "t12": fmt(best["t12"]),
                    "t13": "" if best["t13"] is None else fmt(best["t13"]),
                    "focal": "" if best["focal"] is None else fmt(best["focal"]),
                }
            rows.append(
                (
                    "noise", solver_id, str(seed), str(index), fmt(sigma), fmt(1.0),
                    "", vals["pose"], vals["rot12"], vals["rot13"], vals["t12"],
                    vals["t13"], vals["focal"],
                    fmt(dt * 1e6) if with_timing else "", "",
                )
            )
    return rows


def bench_noise(solvers, sigmas, n_instances, seed=0, cluster_deg=DEFAULT_CLUSTER_DEG,
                weights_path=None, delta_factor=None, with_timing=False, jobs=1):
    for s in solvers:
        if s not in SOLVERS and s not in TWO_VIEW_SOLVERS:
            raise KeyError(s)
    blocks = [
        (seed, i, tuple(solvers), tuple(sigmas), cluster_deg, weights_path,
         delta_factor, with_timing)
        for i in range(n_instances)
    ]
    parts = _run_blocks(_noise_instance_worker, blocks, jobs)
    rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: (r[1], float(r[4]), int(r[3])))
    return NOISE_COLUMNS, rows, {}


# --------------------------------------------------------------------------
# Outlier convergence (RANSAC best-so-far at iteration checkpoints)

OUTLIER_COLUMNS = [
    "experiment", "solver", "inlier_ratio", "iterations", "n_triplets",
    "mean_pose_error_deg", "mean_inlier_fraction",
]


def _outlier_triplet_worker(args):
    (seed, index, solvers, ratio, checkpoints, n_corr, noise_sigma, threshold,
     cluster_deg, weights_path, delta_factor) = args
    scene = generate_scene(SceneConfig(seed=seed))
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(index, 11))
    )
    cfg_inst = InstanceConfig(
        variant="full4", n_correspondences=n_corr, camera_cluster_deg=cluster_deg
    )
    inst = make_triplet_instance(scene, cfg_inst, rng, n_points=n_corr)
    inst = add_noise(inst, noise_sigma, rng)
    inst, _mask = inject_outliers(inst, ratio, rng)

    out = {}
    n = inst.x1.shape[0]
    for solver_id in solvers:
        cfg = RansacConfig(
            solver_id=solver_id,
            max_iterations=max(checkpoints),
            inlier_threshold=threshold,
            seed=int(
                np.random.SeedSequence(entropy=seed, spawn_key=(index, 13)).generate_state(1)[0]
            ),
            gt=inst.gt,
            weights=_weights_cached(weights_path) if weights_path else None,
            delta_factor=delta_factor,
            checkpoints=tuple(checkpoints),
        )
        try:
            res = run_ransac((inst.x1, inst.x2, inst.x3), cfg)
            snaps = res.checkpoint_bests
        except EstimationFailedError:
            snaps = [(c, None, 0) for c in checkpoints]
        errs = []
        fracs = []
        for _it, best, score in snaps:
            if best is None:
                errs.append(MISSING_ERROR_DEG)
                fracs.append(0.0)
            else:
                errs.append(min(triplet_pose_error(best, inst.gt), MISSING_ERROR_DEG))
                fracs.append(score / n)
        out[solver_id] = (errs, fracs)
    return out


def bench_outliers(solvers, inlier_ratios, checkpoints, n_triplets, n_corr=500,
                   noise_sigma=1.0, threshold_px=3.0, seed=0,
                   cluster_deg=DEFAULT_CLUSTER_DEG, weights_path=None,
                   delta_factor=None, jobs=1):
    checkpoints = sorted(set(int(c) for c in checkpoints))
    threshold = threshold_px / 1000.0  # calibrated benchmark data
    rows = []
    for ratio in inlier_ratios:
        blocks = [
            (seed, i, tuple(solvers), ratio, tuple(checkpoints), n_corr,
             noise_sigma, threshold, cluster_deg, weights_path, delta_factor)
            for i in range(n_triplets)
        ]
        parts = _run_blocks(_outlier_triplet_worker, blocks, jobs)
        for solver_id in solvers:
            errs = np.zeros(len(checkpoints))
            fracs = np.zeros(len(checkpoints))
            for part in parts:  # triplet order fixes the reduction
                e, f = part[solver_id]
                errs += np.asarray(e)
                fracs += np.asarray(f)
            errs /= n_triplets
            fracs /= n_triplets
            for c_idx, c in enumerate(checkpoints):
                rows.append(
                    (
                        "outliers", solver_id, fmt(ratio), str(c), str(n_triplets),
                        fmt(errs[c_idx]), fmt(fracs[c_idx]),
                    )
                )
    return OUTLIER_COLUMNS, rows, {}


# --------------------------------------------------------------------------
# Timing

TIMING_COLUMNS = [
    "experiment", "solver", "n_trials", "instances_sha256",
    "mean_us", "median_us",
]


def _timing_solver_worker(args):
    (seed, solver_id, n_trials, cluster_deg, weights_path, delta_factor) = args
    scene = generate_scene(SceneConfig(seed=seed))
    digest = hashlib.sha256()
    samples = []
    for i in range(n_trials):
        rng = instance_rng(seed, i)
        if solver_id in TWO_VIEW_SOLVERS:
            inst = make_triplet_instance(
                scene,
                InstanceConfig(variant="mixed6", camera_cluster_deg=cluster_deg),
                rng,
                n_points=6,
            )
            samples.append((inst, None))
            digest.update(inst.x1.tobytes())
            digest.update(inst.x2.tobytes())
            continue
        spec = SOLVERS[solver_id]
        cfg = InstanceConfig(
            variant="mixed6",
            focal=1.2 if spec.focal else None,
            camera_cluster_deg=cluster_deg,
        )
        inst = make_triplet_instance(scene, cfg, rng, n_points=6)
        k = 4 if spec.sample_size == 4 else 3
        variant = {4: "full4", 5: "mixed5", 6: "mixed6"}[spec.sample_size]
        sample = TripletSample(
            variant,
            inst.x1[: spec.sample_size],
            inst.x2[: spec.sample_size],
            inst.x3[:k],
        )
        samples.append((inst, sample))
        digest.update(inst.x1.tobytes())
        digest.update(inst.x2.tobytes())
        digest.update(inst.x3.tobytes())

    times = []
    if solver_id in TWO_VIEW_SOLVERS:
        mode = TWO_VIEW_SOLVERS[solver_id]
        for inst, _ in samples:
            t0 = time.perf_counter()
            solve_4p_twoview(inst.x1[:4], inst.x2[:4], mode, gt_pose12=inst.gt_pose12)
            times.append(time.perf_counter() - t0)
    else:
        for inst, sample in samples:
            cfg = RansacConfig(
                solver_id=solver_id,
                gt=inst.gt,
                weights=_weights_cached(weights_path) if weights_path else None,
                delta_factor=delta_factor,
            )
            t0 = time.perf_counter()
            run_pipeline(sample, cfg)
            times.append(time.perf_counter() - t0)
    times = np.asarray(times) * 1e6
    return (
        "timing", solver_id, str(n_trials), digest.hexdigest(),
        fmt(float(times.mean())), fmt(float(np.median(times))),
    )


def bench_timing(solvers, n_trials=1000, seed=0, cluster_deg=DEFAULT_CLUSTER_DEG,
                 weights_path=None, delta_factor=None, jobs=1):
    blocks = [
        (seed, s, n_trials, cluster_deg, weights_path, delta_factor)
        for s in solvers
    ]
    rows = _run_blocks(_timing_solver_worker, blocks, jobs)
    return TIMING_COLUMNS, list(rows), {}
