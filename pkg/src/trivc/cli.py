"""Command-line interface.

Subcommands: sweep-barycentric, bench-noise, bench-outliers, bench-timing,
solve, synth. Exit codes: 0 success, 2 configuration error, 3 estimation
failed. Output files are byte-deterministic for a fixed seed and flag set;
wall-clock timing columns are only filled on request (--with-timing) or by
bench-timing, whose time columns are the one intentional exception.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, io
from .errors import ConfigurationError, EstimationFailedError, TrivcError
from .io import fmt
from .predictor import load_weights
from .ransac import SOLVERS, RansacConfig, run_ransac
from .synth import (
    InstanceConfig,
    SceneConfig,
    add_noise,
    generate_scene,
    inject_outliers,
    instance_rng,
    make_triplet_instance,
)

ALL_SOLVER_IDS = sorted(SOLVERS) + sorted(bench.TWO_VIEW_SOLVERS)


def _csv_list(kind):
    def parse(text):
        return [kind(v) for v in text.split(",") if v != ""]

    return parse


def _add_common(p, *, jobs=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output file path")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def _solver_args(p, multi):
    if multi:
        p.add_argument(
            "--solvers", type=_csv_list(str), required=True,
            help=f"comma-separated ids from: {', '.join(ALL_SOLVER_IDS)}",
        )
    else:
        p.add_argument("--solver", required=True, help=f"one of: {', '.join(sorted(SOLVERS))}")
    p.add_argument("--weights", help="predictor weights file (learned solvers)")
    p.add_argument("--delta-factor", type=float, default=None,
                   help="shift as a fraction of the triangle size "
                        "(default 0.15 mean / 0.1 learned)")


def build_parser():
    ap = argparse.ArgumentParser(prog="trivc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-barycentric", help="mean-point validation sweep")
    p.add_argument("--n-scenes", type=int, default=10000)
    p.add_argument("--grid-n", type=int, default=19)
    _add_common(p)

    p = sub.add_parser("bench-noise", help="bare-solver error vs image noise")
    _solver_args(p, multi=True)
    p.add_argument("--sigmas", type=_csv_list(float), default=[0.0, 1.0, 2.0, 4.0])
    p.add_argument("--n-instances", type=int, default=1000)
    p.add_argument("--cluster-deg", type=float, default=bench.DEFAULT_CLUSTER_DEG)
    p.add_argument("--with-timing", action="store_true")
    _add_common(p)

    p = sub.add_parser("bench-outliers", help="RANSAC convergence vs inlier ratio")
    _solver_args(p, multi=True)
    p.add_argument("--inlier-ratios", type=_csv_list(float), default=[0.1, 0.2, 0.4])
    p.add_argument("--checkpoints", type=_csv_list(int), default=[10, 100, 1000])
    p.add_argument("--n-triplets", type=int, default=200)
    p.add_argument("--n-correspondences", type=int, default=500)
    p.add_argument("--noise", type=float, default=1.0, help="inlier noise sigma, px")
    p.add_argument("--threshold-px", type=float, default=3.0)
    p.add_argument("--cluster-deg", type=float, default=bench.DEFAULT_CLUSTER_DEG)
    _add_common(p)

    p = sub.add_parser("bench-timing", help="per-call solver timing")
    _solver_args(p, multi=True)
    p.add_argument("--n-trials", type=int, default=1000)
    p.add_argument("--cluster-deg", type=float, default=bench.DEFAULT_CLUSTER_DEG)
    _add_common(p)

    p = sub.add_parser("solve", help="robust estimation over a correspondence file")
    p.add_argument("--input", required=True)
    _solver_args(p, multi=False)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--threshold-px", type=float, default=3.0)
    p.add_argument("--refit", action="store_true")
    p.add_argument("--p3p-select", action="store_true")
    p.add_argument("--with-timing", action="store_true")
    _add_common(p, jobs=False)

    p = sub.add_parser("synth", help="materialize a synthetic correspondence set")
    p.add_argument("--variant", choices=["triplet", "two-view"], default="triplet")
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.0, help="noise sigma, px")
    p.add_argument("--inlier-ratio", type=float, default=1.0)
    p.add_argument("--focal", type=float, default=None,
                   help="shared focal (scaled units); omit for calibrated data")
    p.add_argument("--cluster-deg", type=float, default=bench.DEFAULT_CLUSTER_DEG)
    p.add_argument("--gt-out", help="ground-truth sidecar path")
    _add_common(p, jobs=False)
    return ap


def _write_table(path, comment, columns, rows, meta=None):
    io.write_csv(path, comment, columns, rows)
    if meta:
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            for key in sorted(meta):
                fh.write(f"# {key} {meta[key]}\n")


def _load_weights_arg(args):
    if getattr(args, "weights", None):
        return load_weights(args.weights)
    return None


def _require_weights(solver_ids, args):
    needs = [s for s in solver_ids if "-l" in s]
    if needs and not getattr(args, "weights", None):
        raise ConfigurationError(
            f"solvers {needs} need --weights (predictor parameters)"
        )


def cmd_sweep(args):
    cols, rows, meta = bench.sweep_barycentric(
        args.n_scenes, args.grid_n, args.seed, args.jobs
    )
    meta_fmt = {k: fmt(v) if isinstance(v, float) else str(v) for k, v in meta.items()}
    _write_table(args.out, "# trivc-sweep v1", cols, rows, meta_fmt)
    print(
        f"sweep-barycentric: {args.n_scenes} scenes, argmin cell "
        f"({meta['argmin_a']:.4f}, {meta['argmin_b']:.4f}), gaussian mean "
        f"({meta['gaussian_mean_a']:.4f}, {meta['gaussian_mean_b']:.4f})"
    )
    return 0


def cmd_bench_noise(args):
    _require_weights(args.solvers, args)
    cols, rows, meta = bench.bench_noise(
        args.solvers, args.sigmas, args.n_instances, seed=args.seed,
        cluster_deg=args.cluster_deg, weights_path=args.weights,
        delta_factor=args.delta_factor, with_timing=args.with_timing,
        jobs=args.jobs,
    )
    _write_table(args.out, "# trivc-noise v1", cols, rows)
    print(f"bench-noise: {len(rows)} records -> {args.out}")
    return 0


def cmd_bench_outliers(args):
    _require_weights(args.solvers, args)
    cols, rows, meta = bench.bench_outliers(
        args.solvers, args.inlier_ratios, args.checkpoints, args.n_triplets,
        n_corr=args.n_correspondences, noise_sigma=args.noise,
        threshold_px=args.threshold_px, seed=args.seed,
        cluster_deg=args.cluster_deg, weights_path=args.weights,
        delta_factor=args.delta_factor, jobs=args.jobs,
    )
    _write_table(args.out, "# trivc-outliers v1", cols, rows)
    print(f"bench-outliers: {len(rows)} aggregate rows -> {args.out}")
    return 0


def cmd_bench_timing(args):
    _require_weights(args.solvers, args)
    cols, rows, meta = bench.bench_timing(
        args.solvers, n_trials=args.n_trials, seed=args.seed,
        cluster_deg=args.cluster_deg, weights_path=args.weights,
        delta_factor=args.delta_factor, jobs=args.jobs,
    )
    _write_table(args.out, "# trivc-timing v1", cols, rows)
    print(f"bench-timing: {len(rows)} solvers -> {args.out}")
    return 0


def cmd_solve(args):
    cs = io.read_correspondences(args.input)
    if cs.x3 is None:
        raise ConfigurationError("solve needs a three-view correspondence file")
    if args.solver not in SOLVERS:
        raise ConfigurationError(f"unknown solver {args.solver!r}")
    cfg = RansacConfig(
        solver_id=args.solver,
        max_iterations=args.iters,
        inlier_threshold=args.threshold_px / cs.px_per_unit,
        seed=args.seed,
        refit=args.refit,
        weights=_load_weights_arg(args),
        delta_factor=args.delta_factor,
        p3p_select=args.p3p_select,
    )
    if "-o" == args.solver[-2:]:
        raise ConfigurationError("oracle solvers are benchmark-only (need ground truth)")
    result = run_ransac((cs.x1, cs.x2, cs.x3), cfg)
    doc = {
        "schema": "trivc-solve v1",
        "solver": args.solver,
        "seed": args.seed,
        "iterations": result.iterations_run,
        "score": result.score,
        "n_correspondences": cs.n,
        "inlier_fraction": fmt(result.score / cs.n),
        "refit_used": result.refit_used,
        "pose12": io._pose_dict(result.best.pose12),
        "pose13": io._pose_dict(result.best.pose13),
        "focal": None if result.best.focal is None else fmt(result.best.focal),
        "inlier_mask": [int(v) for v in result.inlier_mask],
    }
    if args.with_timing:
        doc["wall_time_ms"] = fmt(result.wall_time * 1e3)
    else:
        print(f"solve: wall time {result.wall_time * 1e3:.1f} ms", file=sys.stderr)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"solve: score {result.score}/{cs.n} -> {args.out}")
    return 0


def cmd_synth(args):
    scene = generate_scene(SceneConfig(seed=args.seed))
    rng = instance_rng(args.seed, 0)
    variant = "two_view4" if args.variant == "two-view" else "full4"
    cfg = InstanceConfig(
        variant=variant,
        noise_sigma=args.noise,
        inlier_ratio=args.inlier_ratio,
        n_correspondences=args.count,
        focal=args.focal,
        camera_cluster_deg=args.cluster_deg,
    )
    inst = make_triplet_instance(scene, cfg, rng, n_points=args.count)
    inst = add_noise(inst, args.noise, rng)
    inst, mask = inject_outliers(inst, args.inlier_ratio, rng)
    cs = io.CorrespondenceSet(
        x1=inst.x1, x2=inst.x2, x3=inst.x3,
        vis3=None if inst.x3 is None else np.ones(inst.x1.shape[0], dtype=bool),
        calibrated=args.focal is None,
        px_per_unit=cfg.px_per_unit,
        focal=args.focal,
    )
    io.write_correspondences(args.out, cs)
    if args.gt_out:
        if inst.gt is None:
            raise ConfigurationError("two-view instances have no triplet ground truth")
        io.write_ground_truth(args.gt_out, inst.gt, mask)
    print(f"synth: {args.count} correspondences -> {args.out}")
    return 0


COMMANDS = {
    "sweep-barycentric": cmd_sweep,
    "bench-noise": cmd_bench_noise,
    "bench-outliers": cmd_bench_outliers,
    "bench-timing": cmd_bench_timing,
    "solve": cmd_solve,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except KeyError as exc:
        print(f"error: unknown solver {exc}", file=sys.stderr)
        return 2
    except TrivcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
